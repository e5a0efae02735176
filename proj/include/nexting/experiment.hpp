#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nexting/eval.hpp"
#include "nexting/features.hpp"
#include "nexting/horde.hpp"
#include "nexting/oracle.hpp"
#include "nexting/sim.hpp"

namespace nexting {

// ---------------------------------------------------------------------------
// Library-level experiment pieces shared by the CLI and the acceptance suite.

/// r_t for every log step.
std::vector<double> target_series(const PredictionSpec& spec, std::span<const SensorFrame> frames,
                                  std::span<const FeatureVector> features);
/// gamma_t for every log step.
std::vector<double> gamma_series(const PredictionSpec& spec, std::span<const SensorFrame> frames);

std::vector<FeatureVector> encode_all(const TileCoder& coder, std::span<const SensorFrame> frames);

struct OnlineOptions {
  unsigned workers = 1;
  std::optional<double> lambdaOverride;
  /// Replaces every alpha with alphaScale / activePerStep.
  std::optional<double> alphaScaleOverride;
  /// Learn on the bias feature alone. Targets still read the full coder's
  /// features, and alpha is rescaled by activePerStep so that
  /// alpha * active stays the same.
  bool biasOnly = false;
  std::vector<std::uint32_t> probes;
};

struct OnlineResult {
  PredictionBank bank;
  /// probePredictions[p][t] is v_t: the prediction for step t made before
  /// the update that consumes r_{t+1}.
  std::vector<std::vector<double>> probePredictions;
};

/// Streams the log through encode -> bank_step. Throws NumericError naming
/// the prediction id and step on divergence.
OnlineResult run_online(const TileCoder& coder, std::span<const SensorFrame> frames,
                        std::vector<PredictionSpec> specs, const OnlineOptions& options);

struct CycleSummary {
  double medianMs = 0.0;
  double p90Ms = 0.0;
  double p99Ms = 0.0;
  double maxMs = 0.0;
  std::size_t steps = 0;
};
CycleSummary summarize_cycles(std::span<const std::chrono::nanoseconds> cycles);

struct OfflineProbe {
  std::uint32_t id = 0;
  ReturnSeries returns;
  OfflineSolution solution;
  std::vector<double> predictions;  // theta*.phi_t over the solver window
};

struct OfflineResult {
  std::size_t window = 0;
  double ridge = 0.0;
  std::vector<OfflineProbe> probes;
};

/// Returns and theta* for each probe. All probes share one solver window:
/// the shortest return series among them.
OfflineResult run_offline(std::span<const FeatureVector> features, std::span<const SensorFrame> frames,
                          std::span<const PredictionSpec> specs, std::span<const std::uint32_t> probes,
                          double ridge = -1.0, double eps = 1e-6);

/// Normalizing discount of a spec: its constant or unthrottled gamma.
double nominal_gamma(const PredictionSpec& spec);

// ---------------------------------------------------------------------------
// Commands. Each writes into an output directory with a manifest.json.

struct SimulateConfig {
  std::filesystem::path out;  // log file path; the manifest goes next to it
  std::int64_t steps = 0;
  std::uint64_t seed = 7;
  std::optional<std::filesystem::path> params;
};
void cmd_simulate(const SimulateConfig& config);

struct LearnConfig {
  std::filesystem::path log;
  std::filesystem::path tiling;
  std::optional<std::filesystem::path> specs;  // generated when absent
  std::filesystem::path outDir;
  unsigned workers = 1;
  std::optional<double> lambdaOverride;
  std::optional<double> alphaScaleOverride;
  bool biasOnly = false;
  DefaultSpecOptions defaults;
  std::vector<std::uint32_t> probes;  // default_probes when empty
};
void cmd_learn(const LearnConfig& config);

struct SolveConfig {
  std::filesystem::path log;
  std::filesystem::path tiling;
  std::filesystem::path specs;
  std::filesystem::path outDir;
  std::vector<std::uint32_t> probes;
  double ridge = -1.0;
  double eps = 1e-6;
};
void cmd_solve(const SolveConfig& config);

struct ReportConfig {
  std::filesystem::path log;
  std::vector<std::pair<std::string, std::filesystem::path>> runs;  // label, learn output dir
  std::optional<std::filesystem::path> solveDir;
  std::filesystem::path outDir;
  std::size_t binSize = 1000;
  EventWindow window{100, 100};
  double eventThreshold = 0.99;
  std::size_t refractory = 100;
  std::string eventChannel = "light";
  std::size_t maxEvents = 100;  // most recent events averaged
};
void cmd_report(const ReportConfig& config);

}  // namespace nexting
