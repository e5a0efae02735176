#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nexting/common.hpp"
#include "nexting/features.hpp"

namespace nexting {

/// Reference channel set emitted by the pen simulator, in frame order.
namespace channel {
inline constexpr std::size_t IrFront = 0;
inline constexpr std::size_t IrLeft = 1;
inline constexpr std::size_t IrRight = 2;
inline constexpr std::size_t IrBack = 3;
inline constexpr std::size_t Light = 4;
inline constexpr std::size_t LightLeft = 5;
inline constexpr std::size_t LightRight = 6;
inline constexpr std::size_t LightBack = 7;
inline constexpr std::size_t MotorVoltage0 = 8;
inline constexpr std::size_t MotorCurrent0 = 11;
inline constexpr std::size_t MotorTemperature = 14;
inline constexpr std::size_t MagX = 15;
inline constexpr std::size_t MagY = 16;
inline constexpr std::size_t LastAction = 17;
inline constexpr std::size_t Count = 18;
}  // namespace channel

const std::vector<std::string>& sim_channel_names();

enum class Action : int { Forward = 0, SlideLeft = 1, SlideRight = 2, BackTurn = 3 };
inline constexpr int kActionCount = 4;

struct PolicyParams {
  double randomActionProb = 0.05;
  /// Band for the left distance channel, in normalized proximity units
  /// (1 = touching, 0 = at sensor range). Below `low` the wall is too far.
  double sideLow = 0.74;
  double sideHigh = 0.86;
  /// Front proximity at or above which the robot backs off and turns.
  double frontObstacle = 0.74;
};

struct SimParams {
  double penSide = 2.0;
  double lampX = 0.6;  // the lamp sits on the y = 0 edge
  double lampY = 0.0;
  double saturationRadius = 0.45;  // light channel is 1.0 within this distance
  double sensorRange = 1.5;        // metres at which proximity reaches 0
  double robotRadius = 0.1;
  double forwardSpeed = 0.015;  // metres per step
  double slideSpeed = 0.01;
  double backSpeed = 0.01;
  double turnStep = 0.5235987755982988;  // 30 degrees per back-turn step
  double alignRate = 0.2617993877991494;  // 15 degrees per step toward the wall-parallel heading
  double sensorNoise = 0.01;
  double currentNoise = 0.02;
  std::int64_t pauseIntervalSteps = 8400;  // about 14 minutes of 0.1 s steps
  double pauseJitter = 0.1;                // relative, uniform
  std::int64_t pauseDurationSteps = 300;
  std::uint64_t seed = 1;
  PolicyParams policy;
};

/// `key value` lines, '#' comments. Keys are the SimParams field names
/// (policy fields prefixed `policy.`); `p` is an alias for the random
/// action probability. Unknown keys are a ParseError.
SimParams parse_sim_params(std::string_view text);
std::string format_sim_params(const SimParams& p);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, 0 = +x
};

/// Square pen with a lamp on one edge and a holonomic point robot. The
/// motor controller holds a heading setpoint that is always a multiple of
/// 90 degrees; forward and slide actions steer toward it, and a back-turn
/// issued against an obstacle advances it by -90 degrees (a corner turn).
struct PenWorld {
  SimParams params;
  Pose pose;
  double headingSetpoint = 0.0;
  std::array<double, 3> wheelSpeed{};  // normalized, last step
  std::int64_t step = 0;
  std::int64_t overheatTimer = 0;
  std::int64_t currentInterval = 0;
  std::int64_t pauseRemaining = 0;
  CounterRng rng;
  SensorFrame lastFrame;

  bool paused() const noexcept { return pauseRemaining > 0; }
};

/// World at step 0: robot on the top edge heading +x with the wall on its
/// left, and the first frame already sensed.
PenWorld make_world(const SimParams& params);

struct PolicyDecision {
  Action action = Action::Forward;
  bool random = false;
};

/// Wall-following: with probability p a uniformly random action; otherwise
/// back-turn when the front sensor reports an obstacle, slide to bring the
/// left sensor into its band, else forward. Reads world.lastFrame.
PolicyDecision wall_follow_policy(PenWorld& world);

/// Advances one 0.1 s step and returns the sensed frame. During a cooling
/// pause the wheels do not move and their voltage and current read 0.
SensorFrame step_sim(PenWorld& world, Action action);

/// Convenience: runs policy and kinematics for `steps` frames.
struct SimRun {
  std::vector<SensorFrame> frames;
  std::vector<std::pair<std::int64_t, std::int64_t>> pauses;  // [start, end) steps
};
SimRun simulate(const SimParams& params, std::int64_t steps);

/// Log format: CSV with header `step,action,<channel names...>`, channel
/// values written with 6 fixed decimals.
void write_log(const std::filesystem::path& path, std::span<const SensorFrame> frames,
               std::span<const std::string> channelNames);
std::string format_log(std::span<const SensorFrame> frames, std::span<const std::string> channelNames);

struct SensorLog {
  std::vector<std::string> channelNames;
  std::vector<SensorFrame> frames;
};
/// Throws ParseError with a line number on wrong column counts, unparsable
/// numbers, or channel values outside [0,1].
SensorLog load_log(const std::filesystem::path& path);
SensorLog parse_log(std::string_view text);

/// Rounds to the 6 decimals the log stores, so in-memory frames equal
/// their logged form bit for bit.
double quantize_reading(double v) noexcept;

}  // namespace nexting
