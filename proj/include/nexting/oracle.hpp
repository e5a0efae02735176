#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "nexting/features.hpp"

namespace nexting {

/// Ideal returns G_t for t = 0 .. N-H-1 of a logged run.
struct ReturnSeries {
  std::vector<double> values;
  std::size_t horizon = 0;  // H: trailing log steps excluded
  double eps = 1e-6;

  std::size_t size() const noexcept { return values.size(); }
};

/// Smallest k >= 1 with maxGamma^k <= eps.
std::size_t truncation_horizon(double maxGamma, double eps);

/// targets[t] = r_t and gammas[t] = gamma_t for every log step t. Computes
///
///   G_t = r_{t+1} + gamma_{t+1} G_{t+1}
///
/// backward from the end of the log with zero tail, then drops the last H
/// steps, so every kept value is within eps * r_max / (1 - gamma_max) of
/// the infinite-horizon return. Throws InputError on gamma outside [0,1),
/// eps outside (0,1), mismatched lengths, or a log no longer than H.
ReturnSeries compute_returns(std::span<const double> targets, std::span<const double> gammas, double eps = 1e-6);

struct OfflineSolution {
  std::vector<double> thetaStar;
  double ridge = 0.0;
  double residualRmse = 0.0;
};

/// Default ridge: 1e-8 * trace(A) / n.
double default_ridge(double gramTrace, std::size_t n);

/// Least-squares solver for many return series over one feature log.
/// Accumulates A = sum_t phi_t phi_t^T over the first `window` steps using
/// only active-index pairs, adds ridge * I and factors once (Cholesky).
class OfflineSolver {
 public:
  /// ridge < 0 selects default_ridge. Throws NumericError when the system
  /// is singular, which for tile-coded features needs ridge > 0.
  OfflineSolver(std::span<const FeatureVector> featureLog, std::size_t window, double ridge = -1.0);
  ~OfflineSolver();
  OfflineSolver(OfflineSolver&&) noexcept;
  OfflineSolver& operator=(OfflineSolver&&) noexcept;

  std::size_t n() const noexcept { return n_; }
  std::size_t window() const noexcept { return window_; }
  double ridge() const noexcept { return ridge_; }
  double gram_trace() const noexcept { return gramTrace_; }

  /// Dense copy of A (without ridge), row-major n x n. For tests.
  std::vector<double> gram_dense() const;

  /// returns.size() must be >= window; only the first `window` values are used.
  OfflineSolution solve(const ReturnSeries& returns) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::span<const FeatureVector> log_;
  std::size_t n_ = 0;
  std::size_t window_ = 0;
  double ridge_ = 0.0;
  double gramTrace_ = 0.0;
};

/// Single-shot form: window = returns.size().
OfflineSolution solve_offline(std::span<const FeatureVector> featureLog, const ReturnSeries& returns,
                              double ridge = -1.0);

/// sqrt(mean_t (phi_t . theta - G_t)^2) over the common prefix of the log
/// and the returns. Throws InputError when the overlap is empty.
double offline_rmse(std::span<const double> theta, std::span<const FeatureVector> featureLog,
                    std::span<const double> returns);

/// CSV export: header `step,value`.
void write_returns_csv(const std::filesystem::path& path, const ReturnSeries& returns);

}  // namespace nexting
