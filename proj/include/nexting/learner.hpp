#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nexting/features.hpp"

namespace nexting {

/// Discount of one prediction. Constant, or switched to a throttled value
/// while a trigger channel is at or above a threshold (pseudo-termination).
struct DiscountRule {
  enum class Kind { Constant, StateDependent };

  Kind kind = Kind::Constant;
  double gamma = 0.0;
  double throttledGamma = 0.0;
  std::size_t triggerChannel = 0;
  double triggerThreshold = 1.0;

  static DiscountRule constant(double gamma) { return {Kind::Constant, gamma, 0.0, 0, 1.0}; }
  static DiscountRule throttled(double gamma, double throttled, std::size_t channel, double threshold) {
    return {Kind::StateDependent, gamma, throttled, channel, threshold};
  }

  /// Largest discount the rule can produce.
  double max_gamma() const noexcept;
  bool operator==(const DiscountRule&) const = default;
};

/// Weights, eligibility trace and the most recent prediction of one learner.
struct LearnerState {
  std::vector<double> theta;
  std::vector<double> trace;
  double lastPrediction = 0.0;

  explicit LearnerState(std::size_t n = 0) : theta(n, 0.0), trace(n, 0.0) {}
  std::size_t n() const noexcept { return theta.size(); }
};

/// Inner product of theta with a binary feature vector: the sum of theta
/// over the active indices, in index order.
double predict(std::span<const double> theta, const FeatureVector& fv);
double predict(const LearnerState& state, const FeatureVector& fv);

/// One step of linear TD(lambda) with per-step discounts:
///
///   e     <- gammaPrev * lambda * e + phi(prev)
///   delta <- reward + gammaNext * theta.phi(next) - theta.phi(prev)
///   theta <- theta + alpha * delta * e
///
/// delta uses the pre-update weights. On return state.lastPrediction holds
/// the post-update prediction for fvNext. Traces are dense; subnormal
/// intermediates are flushed to zero inside the update loop.
///
/// Throws InputError on a dimension mismatch and NumericError when the
/// reward, the TD error or the updated weights are not finite.
void td_step(LearnerState& state, const FeatureVector& fvPrev, const FeatureVector& fvNext, double reward,
             double gammaPrev, double gammaNext, double lambda, double alpha);

void reset_traces(LearnerState& state) noexcept;

struct CheckpointEntry {
  std::uint32_t id = 0;
  std::vector<double> theta;
};

struct CheckpointView {
  std::uint32_t id = 0;
  std::span<const double> theta;
};

/// Binary weight checkpoint, little-endian:
///   "NXTCKPT1" | u32 version (1) | u32 count | u64 n |
///   count x ( u32 id | u32 zero | f64[n] theta )
void write_checkpoint(const std::filesystem::path& path, std::size_t n, std::span<const CheckpointView> entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path, std::size_t* n = nullptr);

}  // namespace nexting
