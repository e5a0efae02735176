#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nexting/features.hpp"
#include "nexting/learner.hpp"

namespace nexting {

/// What signal a prediction anticipates.
struct TargetSelector {
  enum class Kind { SensorChannel, FeatureComponent, WheelPower };

  Kind kind = Kind::SensorChannel;
  std::size_t channel = 0;       // SensorChannel
  std::size_t featureIndex = 0;  // FeatureComponent
  std::array<std::pair<std::size_t, std::size_t>, 3> wheels{};  // WheelPower: (voltage, current) per wheel

  static TargetSelector sensor(std::size_t ch) { return {Kind::SensorChannel, ch, 0, {}}; }
  static TargetSelector feature(std::size_t idx) { return {Kind::FeatureComponent, 0, idx, {}}; }
  static TargetSelector power(std::array<std::pair<std::size_t, std::size_t>, 3> wheels) {
    return {Kind::WheelPower, 0, 0, wheels};
  }
  bool operator==(const TargetSelector&) const = default;
};

/// One nexting question: target signal, timescale, and learning parameters.
struct PredictionSpec {
  std::uint32_t id = 0;
  TargetSelector target;
  DiscountRule discount;
  double lambda = 0.9;
  double alpha = 0.1;

  bool operator==(const PredictionSpec&) const = default;
};

struct PredictionBank {
  std::vector<PredictionSpec> specs;
  std::vector<LearnerState> states;
  std::size_t n = 0;                // learning feature dimension
  std::size_t targetFeatureDim = 0;  // dimension of the vectors feature targets read
  std::size_t channelCount = 0;
  std::vector<std::chrono::nanoseconds> cycleStats;

  std::size_t size() const noexcept { return specs.size(); }
};

/// Validates the specs and allocates zeroed learners. Ids must be exactly
/// 0..k-1 in order. targetFeatureDim defaults to n; it differs when the
/// learners use a reduced representation (bias only) but feature targets
/// still read the full tile-coded vector.
PredictionBank build_bank(std::vector<PredictionSpec> specs, std::size_t n, std::size_t channelCount,
                          std::size_t targetFeatureDim = 0);

double resolve_target(const PredictionSpec& spec, const SensorFrame& frame, const FeatureVector& fv);
double resolve_gamma(const PredictionSpec& spec, const SensorFrame& frame);

struct BankStepResult {
  std::vector<double> predictions;  // post-update predictions for fvNext
  std::chrono::nanoseconds cycle{0};
};

/// Applies one TD update to every learner. The reward is resolved on the
/// next frame (and on targetFvNext for feature targets), gamma_t on the
/// previous frame and gamma_{t+1} on the next. Learners are updated in
/// parallel over `workers` threads; the result does not depend on the
/// worker count.
///
/// Throws NumericError naming the lowest offending prediction id.
BankStepResult bank_step(PredictionBank& bank, const FeatureVector& fvPrev, const FeatureVector& fvNext,
                         const SensorFrame& framePrev, const SensorFrame& frameNext, unsigned workers = 1,
                         const FeatureVector* targetFvNext = nullptr);

/// Current predictions for fv, no learning.
std::vector<double> bank_predict(const PredictionBank& bank, const FeatureVector& fv);

/// Spec file, one line per spec:
///   pred <id> <target> <discount-rule> <lambda> <alpha>
/// target:        sensor:<ch> | feature:<index> | power:<v0>/<c0>,<v1>/<c1>,<v2>/<c2>
/// discount-rule: const:<gamma> | throttle:<gamma>:<throttled>:<ch>:<threshold>
/// Channels are indices or names from channelNames. '#' starts a comment.
std::vector<PredictionSpec> parse_spec_file(std::string_view text, std::span<const std::string> channelNames);
std::string format_spec_file(std::span<const PredictionSpec> specs, std::span<const std::string> channelNames);
std::string format_target(const TargetSelector& t, std::span<const std::string> channelNames);
std::string format_discount(const DiscountRule& d, std::span<const std::string> channelNames);

struct DefaultSpecOptions {
  std::vector<double> discounts{0.0, 0.8, 0.95, 0.9875};
  /// Sensor and feature-target specs together fill this many slots; the
  /// feature-target count is (bankSize - channels * discounts) / discounts
  /// unless featureTargets is set.
  std::size_t bankSize = 2160;
  std::optional<std::size_t> featureTargets;
  std::uint64_t featureSeed = 1;
  double lambda = 0.9;
  /// Absolute step size is alphaScale / activePerStep.
  double alphaScale = 0.1;
  /// Append the throttled wheel-power prediction when the channels exist.
  bool includePower = true;
  double powerGamma = 0.95;
  double powerThrottledGamma = 0.1;
  double powerTriggerThreshold = 1.0;
};

struct DefaultSpecs {
  std::vector<PredictionSpec> specs;
  std::vector<std::uint32_t> featureComponents;  // the sampled target indices
};

/// Sensor-channel targets for every channel at every discount, then
/// feature-component targets at every discount for components sampled
/// without replacement from [0, n), then the optional power prediction.
DefaultSpecs generate_default_specs(std::span<const std::string> channelNames, std::size_t n,
                                    std::size_t activePerStep, const DefaultSpecOptions& options);

/// Ids of specs whose target is the named light channel or wheel power.
std::vector<std::uint32_t> default_probes(std::span<const PredictionSpec> specs,
                                          std::span<const std::string> channelNames,
                                          std::string_view lightChannel = "light");

}  // namespace nexting
