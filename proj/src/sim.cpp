#include "nexting/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace nexting {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kWheelBase = 0.15;   // wheel distance from the robot centre
constexpr double kWheelNorm = 0.03;   // wheel surface speed reading 1.0
constexpr double kAmbientPeriod = 36000.0;
constexpr std::array<double, 3> kWheelAngles{kPi / 2, 7 * kPi / 6, 11 * kPi / 6};

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a <= -kPi) a += 2 * kPi;
  return a;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Distance from (x, y) along direction angle to the pen boundary.
double ray_to_wall(double x, double y, double angle, double side) {
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  double t = std::numeric_limits<double>::infinity();
  if (dx > 1e-12) t = std::min(t, (side - x) / dx);
  if (dx < -1e-12) t = std::min(t, -x / dx);
  if (dy > 1e-12) t = std::min(t, (side - y) / dy);
  if (dy < -1e-12) t = std::min(t, -y / dy);
  return std::max(t, 0.0);
}

std::int64_t draw_running_steps(PenWorld& w) {
  const auto& p = w.params;
  const double jitter = p.pauseJitter * (2.0 * w.rng.uniform() - 1.0);
  const auto interval = static_cast<std::int64_t>(std::llround(static_cast<double>(p.pauseIntervalSteps) * (1.0 + jitter)));
  return std::max<std::int64_t>(1, interval - p.pauseDurationSteps);
}

SensorFrame sense(PenWorld& w, Action action, const std::array<double, 3>& wheelDelta) {
  const auto& p = w.params;
  SensorFrame f;
  f.step = w.step;
  f.action = static_cast<int>(action);
  f.channels.assign(channel::Count, 0.0);
  auto noisy = [&](double v, double sigma) { return clamp01(v + sigma * w.rng.normal()); };

  const double h = w.pose.heading;
  const std::array<double, 4> dirs{h, h + kPi / 2, h - kPi / 2, h + kPi};
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = ray_to_wall(w.pose.x, w.pose.y, dirs[i], p.penSide);
    f.channels[channel::IrFront + i] = noisy(1.0 - d / p.sensorRange, p.sensorNoise);
  }

  const double lx = p.lampX - w.pose.x;
  const double ly = p.lampY - w.pose.y;
  const double dist = std::max(std::hypot(lx, ly), 1e-6);
  const double intensity = std::min((p.saturationRadius / dist) * (p.saturationRadius / dist), 4.0);
  const double ambient = 0.04 + 0.025 * std::sin(2 * kPi * static_cast<double>(w.step) / kAmbientPeriod);
  f.channels[channel::Light] = noisy(intensity + ambient, p.sensorNoise);
  const double lampAngle = std::atan2(ly, lx);
  const std::array<double, 3> sides{h + kPi / 2, h - kPi / 2, h + kPi};
  for (std::size_t i = 0; i < 3; ++i) {
    const double facing = std::max(0.0, std::cos(wrap_angle(lampAngle - sides[i])));
    f.channels[channel::LightLeft + i] = noisy(0.8 * intensity * facing + ambient, p.sensorNoise);
  }

  for (std::size_t i = 0; i < 3; ++i) {
    const double speed = std::abs(w.wheelSpeed[i]);
    double volt = 0.0;
    double current = 0.0;
    if (!w.paused()) {
      volt = noisy(speed, 0.5 * p.currentNoise);
      current = noisy(0.05 + 0.65 * speed + 0.3 * std::abs(wheelDelta[i]), p.currentNoise);
    }
    f.channels[channel::MotorVoltage0 + i] = volt;
    f.channels[channel::MotorCurrent0 + i] = current;
  }

  double heat;
  if (w.paused()) {
    heat = 0.3 + 0.7 * static_cast<double>(w.pauseRemaining) / static_cast<double>(std::max<std::int64_t>(1, p.pauseDurationSteps));
  } else {
    heat = 0.3 + 0.7 * (1.0 - static_cast<double>(w.overheatTimer) / static_cast<double>(std::max<std::int64_t>(1, w.currentInterval)));
  }
  f.channels[channel::MotorTemperature] = noisy(heat, 0.5 * p.sensorNoise);
  f.channels[channel::MagX] = noisy(0.5 + 0.5 * std::cos(h), p.sensorNoise);
  f.channels[channel::MagY] = noisy(0.5 + 0.5 * std::sin(h), p.sensorNoise);
  f.channels[channel::LastAction] = static_cast<double>(f.action) / (kActionCount - 1);

  for (auto& v : f.channels) v = quantize_reading(v);
  return f;
}

}  // namespace

const std::vector<std::string>& sim_channel_names() {
  static const std::vector<std::string> names{
      "ir_front",       "ir_left",        "ir_right",       "ir_back",    "light",      "light_left",
      "light_right",    "light_back",     "motor_voltage0", "motor_voltage1", "motor_voltage2",
      "motor_current0", "motor_current1", "motor_current2", "motor_temp", "mag_x",      "mag_y",
      "last_action"};
  return names;
}

double quantize_reading(double v) noexcept { return std::round(v * 1e6) / 1e6; }

PenWorld make_world(const SimParams& params) {
  if (!(params.policy.randomActionProb >= 0.0 && params.policy.randomActionProb <= 1.0)) {
    throw ConfigError("random action probability must be in [0,1]");
  }
  if (!(params.penSide > 4 * params.robotRadius)) throw ConfigError("pen too small for the robot");
  if (params.pauseIntervalSteps <= params.pauseDurationSteps || params.pauseDurationSteps < 0) {
    throw ConfigError("pause interval must exceed the pause duration");
  }
  PenWorld w;
  w.params = params;
  w.rng = CounterRng(params.seed);
  w.pose = {0.5, params.penSide - 0.3, 0.0};
  w.headingSetpoint = 0.0;
  w.currentInterval = draw_running_steps(w);
  w.overheatTimer = w.currentInterval;
  w.lastFrame = sense(w, Action::Forward, {});
  return w;
}

PolicyDecision wall_follow_policy(PenWorld& world) {
  const auto& pp = world.params.policy;
  PolicyDecision d;
  if (world.rng.uniform() < pp.randomActionProb) {
    d.random = true;
    d.action = static_cast<Action>(world.rng.below(kActionCount));
    return d;
  }
  const auto& ch = world.lastFrame.channels;
  if (ch[channel::IrFront] >= pp.frontObstacle) {
    d.action = Action::BackTurn;
  } else if (ch[channel::IrLeft] > pp.sideHigh) {
    d.action = Action::SlideRight;
  } else if (ch[channel::IrLeft] < pp.sideLow) {
    d.action = Action::SlideLeft;
  } else {
    d.action = Action::Forward;
  }
  return d;
}

SensorFrame step_sim(PenWorld& w, Action action) {
  const auto& p = w.params;
  ++w.step;
  std::array<double, 3> wheels{};

  if (w.paused()) {
    if (--w.pauseRemaining == 0) {
      w.currentInterval = draw_running_steps(w);
      w.overheatTimer = w.currentInterval;
    }
  } else {
    double vx = 0.0, vy = 0.0, omega = 0.0;
    const double align = std::clamp(wrap_angle(w.headingSetpoint - w.pose.heading), -p.alignRate, p.alignRate);
    switch (action) {
      case Action::Forward:
        vx = p.forwardSpeed;
        omega = align;
        break;
      case Action::SlideLeft:
        vx = 0.6 * p.forwardSpeed;
        vy = p.slideSpeed;
        omega = align;
        break;
      case Action::SlideRight:
        vx = 0.6 * p.forwardSpeed;
        vy = -p.slideSpeed;
        omega = align;
        break;
      case Action::BackTurn: {
        vx = -p.backSpeed;
        omega = -p.turnStep;
        const bool blocked = w.lastFrame.channels[channel::IrFront] >= p.policy.frontObstacle;
        if (blocked && std::abs(wrap_angle(w.headingSetpoint - w.pose.heading)) < kPi / 9) {
          w.headingSetpoint = wrap_angle(w.headingSetpoint - kPi / 2);
        }
        break;
      }
    }
    const double h = w.pose.heading;
    const double lo = p.robotRadius;
    const double hi = p.penSide - p.robotRadius;
    w.pose.x = std::clamp(w.pose.x + vx * std::cos(h) - vy * std::sin(h), lo, hi);
    w.pose.y = std::clamp(w.pose.y + vx * std::sin(h) + vy * std::cos(h), lo, hi);
    w.pose.heading = wrap_angle(h + omega);
    for (std::size_t i = 0; i < 3; ++i) {
      const double b = kWheelAngles[i];
      wheels[i] = (-std::sin(b) * vx + std::cos(b) * vy + kWheelBase * omega) / kWheelNorm;
    }
    if (--w.overheatTimer <= 0) w.pauseRemaining = p.pauseDurationSteps;
  }

  std::array<double, 3> delta{};
  for (std::size_t i = 0; i < 3; ++i) {
    wheels[i] = std::clamp(wheels[i], -1.0, 1.0);
    delta[i] = wheels[i] - w.wheelSpeed[i];
  }
  w.wheelSpeed = wheels;
  w.lastFrame = sense(w, action, delta);
  return w.lastFrame;
}

SimRun simulate(const SimParams& params, std::int64_t steps) {
  if (steps < 1) throw ConfigError("run length must be at least 1 step");
  SimRun run;
  run.frames.reserve(static_cast<std::size_t>(steps));
  PenWorld w = make_world(params);
  run.frames.push_back(w.lastFrame);
  std::int64_t pauseStart = -1;
  for (std::int64_t t = 1; t < steps; ++t) {
    const auto decision = wall_follow_policy(w);
    run.frames.push_back(step_sim(w, decision.action));
    if (w.paused() && pauseStart < 0) pauseStart = t;
    if (!w.paused() && pauseStart >= 0) {
      run.pauses.emplace_back(pauseStart, t);
      pauseStart = -1;
    }
  }
  if (pauseStart >= 0) run.pauses.emplace_back(pauseStart, steps);
  return run;
}

std::string format_log(std::span<const SensorFrame> frames, std::span<const std::string> channelNames) {
  std::string out = "step,action";
  for (const auto& n : channelNames) out += "," + n;
  out += '\n';
  out.reserve(out.size() + frames.size() * (16 + 9 * channelNames.size()));
  for (const auto& f : frames) {
    if (f.channels.size() != channelNames.size()) throw InputError("frame width does not match channel names");
    out += std::to_string(f.step);
    out += ',';
    out += std::to_string(f.action);
    for (double v : f.channels) {
      out += ',';
      out += format_fixed(v, 6);
    }
    out += '\n';
  }
  return out;
}

void write_log(const std::filesystem::path& path, std::span<const SensorFrame> frames,
               std::span<const std::string> channelNames) {
  write_text_file(path, format_log(frames, channelNames));
}

SensorLog parse_log(std::string_view text) {
  SensorLog log;
  auto lines = split_char(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("line 1: missing header");
  auto strip = [](std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
  };
  const auto header = split_char(strip(lines[0]), ',');
  if (header.size() < 2 || header[0] != "step" || header[1] != "action") {
    throw ParseError("line 1: header must start with 'step,action'");
  }
  for (std::size_t i = 2; i < header.size(); ++i) log.channelNames.emplace_back(header[i]);
  const std::size_t width = log.channelNames.size();
  log.frames.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = "line " + std::to_string(li + 1);
    const auto cols = split_char(strip(lines[li]), ',');
    if (cols.size() != width + 2) {
      throw ParseError(where + ": expected " + std::to_string(width + 2) + " columns, found " +
                       std::to_string(cols.size()));
    }
    SensorFrame f;
    long long step = 0, action = 0;
    if (!parse_int(cols[0], step)) throw ParseError(where + ": bad step");
    if (!parse_int(cols[1], action)) throw ParseError(where + ": bad action");
    f.step = step;
    f.action = static_cast<int>(action);
    f.channels.resize(width);
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0.0;
      if (!parse_double(cols[c + 2], v)) throw ParseError(where + ": bad value in column " + std::to_string(c + 3));
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ParseError(where + ": value " + std::string(cols[c + 2]) + " outside [0,1] in channel " +
                         log.channelNames[c]);
      }
      f.channels[c] = v;
    }
    log.frames.push_back(std::move(f));
  }
  return log;
}

SensorLog load_log(const std::filesystem::path& path) { return parse_log(read_text_file(path)); }

namespace {

struct ParamField {
  const char* key;
  double SimParams::*real = nullptr;
  std::int64_t SimParams::*integer = nullptr;
  double PolicyParams::*policy = nullptr;
};

const std::vector<ParamField>& param_fields() {
  static const std::vector<ParamField> fields{
      {"penSide", &SimParams::penSide},
      {"lampX", &SimParams::lampX},
      {"lampY", &SimParams::lampY},
      {"saturationRadius", &SimParams::saturationRadius},
      {"sensorRange", &SimParams::sensorRange},
      {"robotRadius", &SimParams::robotRadius},
      {"forwardSpeed", &SimParams::forwardSpeed},
      {"slideSpeed", &SimParams::slideSpeed},
      {"backSpeed", &SimParams::backSpeed},
      {"turnStep", &SimParams::turnStep},
      {"alignRate", &SimParams::alignRate},
      {"sensorNoise", &SimParams::sensorNoise},
      {"currentNoise", &SimParams::currentNoise},
      {"pauseIntervalSteps", nullptr, &SimParams::pauseIntervalSteps},
      {"pauseJitter", &SimParams::pauseJitter},
      {"pauseDurationSteps", nullptr, &SimParams::pauseDurationSteps},
      {"policy.randomActionProb", nullptr, nullptr, &PolicyParams::randomActionProb},
      {"policy.sideLow", nullptr, nullptr, &PolicyParams::sideLow},
      {"policy.sideHigh", nullptr, nullptr, &PolicyParams::sideHigh},
      {"policy.frontObstacle", nullptr, nullptr, &PolicyParams::frontObstacle},
  };
  return fields;
}

}  // namespace

SimParams parse_sim_params(std::string_view text) {
  SimParams p;
  std::size_t lineNo = 0;
  for (auto line : split_char(text, '\n')) {
    ++lineNo;
    const auto tok = split_tokens(line);
    if (tok.empty()) continue;
    const std::string where = "line " + std::to_string(lineNo);
    if (tok.size() != 2) throw ParseError(where + ": expected '<key> <value>'");
    const std::string key = tok[0] == "p" ? "policy.randomActionProb" : tok[0];
    if (key == "seed") {
      long long s = 0;
      if (!parse_int(tok[1], s) || s < 0) throw ParseError(where + ": bad seed");
      p.seed = static_cast<std::uint64_t>(s);
      continue;
    }
    const auto& fields = param_fields();
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const ParamField& f) { return key == f.key; });
    if (it == fields.end()) throw ParseError(where + ": unknown key '" + tok[0] + "'");
    if (it->integer) {
      long long v = 0;
      if (!parse_int(tok[1], v)) throw ParseError(where + ": bad integer for " + key);
      p.*(it->integer) = v;
    } else {
      double v = 0.0;
      if (!parse_double(tok[1], v)) throw ParseError(where + ": bad number for " + key);
      if (it->real) {
        p.*(it->real) = v;
      } else {
        p.policy.*(it->policy) = v;
      }
    }
  }
  return p;
}

std::string format_sim_params(const SimParams& p) {
  std::ostringstream out;
  for (const auto& f : param_fields()) {
    out << f.key << ' ';
    if (f.integer) {
      out << p.*(f.integer);
    } else if (f.real) {
      out << format_double(p.*(f.real));
    } else {
      out << format_double(p.policy.*(f.policy));
    }
    out << '\n';
  }
  out << "seed " << p.seed << '\n';
  return out.str();
}

}  // namespace nexting
