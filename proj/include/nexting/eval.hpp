#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nexting {

struct LearningCurvePoint {
  std::size_t bin = 0;
  double normalizedRmse = 0.0;
};

struct LearningCurve {
  std::size_t binSize = 1000;
  double gamma = 0.0;
  std::vector<LearningCurvePoint> points;
};

/// RMSE of (prediction - return) per consecutive bin, multiplied by
/// (1 - gamma) so that timescales are comparable. The last bin may be
/// partial. Throws InputError on mismatched lengths, empty input or
/// binSize 0.
LearningCurve normalized_rmse(std::span<const double> predictions, std::span<const double> returns, double gamma,
                              std::size_t binSize);

/// Normalized RMSE over one span [begin, end).
double normalized_rmse_span(std::span<const double> predictions, std::span<const double> returns, double gamma,
                            std::size_t begin, std::size_t end);

/// Onsets: steps where signal >= threshold after at least refractorySteps
/// consecutive steps below it.
std::vector<std::size_t> detect_events(std::span<const double> signal, double threshold, std::size_t refractorySteps);

struct EventWindow {
  std::size_t before = 100;
  std::size_t after = 100;
  std::size_t length() const noexcept { return before + after + 1; }
};

/// Per-offset mean of each series over retained events. Offset k of the
/// window sits at index k + before. An event whose window does not fit in
/// every series is dropped and counted.
struct AlignedAverage {
  EventWindow window;
  std::size_t eventCount = 0;
  std::size_t droppedCount = 0;
  std::vector<std::vector<double>> means;

  /// Mean of series s at signed offset (relative to onset).
  double at(std::size_t series, long offset) const;
};

/// Throws InputError when no event is retained.
AlignedAverage align_events(std::span<const std::size_t> onsets, std::span<const std::span<const double>> series,
                            EventWindow window);

/// `bin,rmse_normalized`
void write_curve_csv(const std::filesystem::path& path, const LearningCurve& curve);
/// `offset,signal,return,prediction` from an average over exactly those
/// three series.
void write_aligned_csv(const std::filesystem::path& path, const AlignedAverage& avg);

}  // namespace nexting
