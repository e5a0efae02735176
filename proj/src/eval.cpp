#include "nexting/eval.hpp"

#include <cmath>
#include <sstream>

#include "nexting/common.hpp"

namespace nexting {

double normalized_rmse_span(std::span<const double> predictions, std::span<const double> returns, double gamma,
                            std::size_t begin, std::size_t end) {
  if (predictions.size() != returns.size()) throw InputError("predictions and returns differ in length");
  if (begin >= end || end > predictions.size()) throw InputError("empty or out-of-range evaluation span");
  double sum = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    const double e = predictions[t] - returns[t];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(end - begin)) * (1.0 - gamma);
}

LearningCurve normalized_rmse(std::span<const double> predictions, std::span<const double> returns, double gamma,
                              std::size_t binSize) {
  if (binSize == 0) throw InputError("bin size must be >= 1");
  if (predictions.size() != returns.size()) throw InputError("predictions and returns differ in length");
  if (predictions.empty()) throw InputError("empty bin span");
  LearningCurve curve;
  curve.binSize = binSize;
  curve.gamma = gamma;
  for (std::size_t b = 0, start = 0; start < predictions.size(); ++b, start += binSize) {
    const std::size_t end = std::min(start + binSize, predictions.size());
    curve.points.push_back({b, normalized_rmse_span(predictions, returns, gamma, start, end)});
  }
  return curve;
}

std::vector<std::size_t> detect_events(std::span<const double> signal, double threshold, std::size_t refractorySteps) {
  std::vector<std::size_t> onsets;
  std::size_t below = 0;
  for (std::size_t t = 0; t < signal.size(); ++t) {
    if (signal[t] >= threshold) {
      if (below >= refractorySteps) onsets.push_back(t);
      below = 0;
    } else {
      ++below;
    }
  }
  return onsets;
}

double AlignedAverage::at(std::size_t s, long offset) const {
  const long idx = offset + static_cast<long>(window.before);
  if (idx < 0 || static_cast<std::size_t>(idx) >= window.length()) throw InputError("offset outside the window");
  return means.at(s)[static_cast<std::size_t>(idx)];
}

AlignedAverage align_events(std::span<const std::size_t> onsets, std::span<const std::span<const double>> series,
                            EventWindow window) {
  AlignedAverage avg;
  avg.window = window;
  avg.means.assign(series.size(), std::vector<double>(window.length(), 0.0));
  for (auto onset : onsets) {
    bool fits = onset >= window.before;
    for (const auto& s : series) fits = fits && onset + window.after < s.size();
    if (!fits) {
      ++avg.droppedCount;
      continue;
    }
    ++avg.eventCount;
    const std::size_t first = onset - window.before;
    for (std::size_t k = 0; k < series.size(); ++k) {
      for (std::size_t i = 0; i < window.length(); ++i) avg.means[k][i] += series[k][first + i];
    }
  }
  if (avg.eventCount == 0) throw InputError("no event admits the full alignment window");
  for (auto& m : avg.means) {
    for (auto& v : m) v /= static_cast<double>(avg.eventCount);
  }
  return avg;
}

void write_curve_csv(const std::filesystem::path& path, const LearningCurve& curve) {
  std::ostringstream out;
  out << "bin,rmse_normalized\n";
  for (const auto& p : curve.points) out << p.bin << ',' << format_double(p.normalizedRmse) << '\n';
  write_text_file(path, out.str());
}

void write_aligned_csv(const std::filesystem::path& path, const AlignedAverage& avg) {
  if (avg.means.size() != 3) throw InputError("aligned export needs signal, return and prediction series");
  std::ostringstream out;
  out << "offset,signal,return,prediction\n";
  for (std::size_t i = 0; i < avg.window.length(); ++i) {
    out << static_cast<long>(i) - static_cast<long>(avg.window.before);
    for (const auto& m : avg.means) out << ',' << format_double(m[i]);
    out << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace nexting
