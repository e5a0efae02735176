#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nexting/common.hpp"
#include "nexting/experiment.hpp"

namespace {

std::vector<std::uint32_t> parse_probe_list(const std::string& text) {
  std::vector<std::uint32_t> ids;
  if (text.empty()) return ids;
  for (auto tok : nexting::split_char(text, ',')) {
    long long v = 0;
    if (!nexting::parse_int(tok, v) || v < 0 || v > 0xffffffffLL) {
      throw nexting::ConfigError("bad probe id '" + std::string(tok) + "'");
    }
    ids.push_back(static_cast<std::uint32_t>(v));
  }
  return ids;
}

// "label=dir" or a bare dir (label = directory name).
std::pair<std::string, std::filesystem::path> parse_run(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    std::filesystem::path p(text);
    auto label = p.filename().string();
    if (label.empty()) label = p.parent_path().filename().string();
    return {label, p};
  }
  if (eq == 0) throw nexting::ConfigError("empty run label in '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nexting: multi-timescale sensor prediction with TD(lambda)"};
  app.require_subcommand(1);

  nexting::SimulateConfig sim;
  std::string simParams;
  auto* simCmd = app.add_subcommand("simulate", "Run the pen robot simulator and write a sensor log");
  simCmd->add_option("--out", sim.out, "Output CSV log")->required();
  simCmd->add_option("--steps", sim.steps, "Number of logged steps")->required();
  simCmd->add_option("--seed", sim.seed, "Random seed");
  simCmd->add_option("--params", simParams, "Simulator parameter file");

  nexting::LearnConfig learn;
  std::string learnSpecs, learnProbes;
  std::optional<double> learnLambda, learnAlphaScale;
  auto* learnCmd = app.add_subcommand("learn", "Learn all predictions online over a sensor log");
  learnCmd->add_option("--log", learn.log, "Sensor log CSV")->required();
  learnCmd->add_option("--tiling", learn.tiling, "Tiling config")->required();
  learnCmd->add_option("--specs", learnSpecs, "Prediction spec file (default: generated bank)");
  learnCmd->add_option("--out", learn.outDir, "Output directory")->required();
  learnCmd->add_option("--workers", learn.workers, "Worker threads")->check(CLI::PositiveNumber);
  learnCmd->add_option("--lambda", learnLambda, "Override lambda for every prediction")->check(CLI::Range(0.0, 1.0));
  learnCmd->add_option("--alpha-scale", learnAlphaScale, "Override every step size with scale / active features")
      ->check(CLI::PositiveNumber);
  learnCmd->add_flag("--bias-only", learn.biasOnly, "Learn on the bias feature alone");
  learnCmd->add_option("--probes", learnProbes, "Comma-separated prediction ids to record");
  learnCmd->add_option("--feature-targets", learn.defaults.featureTargets, "Feature-component targets in the generated bank");
  learnCmd->add_option("--bank-size", learn.defaults.bankSize, "Sensor plus feature-target specs in the generated bank");
  learnCmd->add_option("--feature-seed", learn.defaults.featureSeed, "Seed for sampling feature-component targets");

  nexting::SolveConfig solve;
  std::string solveProbes;
  auto* solveCmd = app.add_subcommand("solve", "Compute returns and the least-squares weights for probe predictions");
  solveCmd->add_option("--log", solve.log, "Sensor log CSV")->required();
  solveCmd->add_option("--tiling", solve.tiling, "Tiling config")->required();
  solveCmd->add_option("--specs", solve.specs, "Prediction spec file")->required();
  solveCmd->add_option("--out", solve.outDir, "Output directory")->required();
  solveCmd->add_option("--probes", solveProbes, "Comma-separated prediction ids");
  solveCmd->add_option("--ridge", solve.ridge, "Ridge term (default: scaled to the Gram trace)");
  solveCmd->add_option("--eps", solve.eps, "Return truncation tolerance");

  nexting::ReportConfig report;
  std::vector<std::string> reportRuns;
  std::string reportSolve;
  auto* reportCmd = app.add_subcommand("report", "Learning curves and event-aligned averages");
  reportCmd->add_option("--log", report.log, "Sensor log CSV")->required();
  reportCmd->add_option("--run", reportRuns, "Learn output dir, optionally label=dir (repeatable)");
  reportCmd->add_option("--solve", reportSolve, "Solve output dir");
  reportCmd->add_option("--out", report.outDir, "Output directory")->required();
  reportCmd->add_option("--bin", report.binSize, "Learning curve bin size")->check(CLI::PositiveNumber);
  reportCmd->add_option("--before", report.window.before, "Steps before each event");
  reportCmd->add_option("--after", report.window.after, "Steps after each event");
  reportCmd->add_option("--threshold", report.eventThreshold, "Event threshold on the event channel");
  reportCmd->add_option("--refractory", report.refractory, "Steps below threshold before an onset");
  reportCmd->add_option("--event-channel", report.eventChannel, "Channel that defines events");
  reportCmd->add_option("--max-events", report.maxEvents, "Average the most recent events only")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (simCmd->parsed()) {
      if (!simParams.empty()) sim.params = simParams;
      nexting::cmd_simulate(sim);
    } else if (learnCmd->parsed()) {
      if (!learnSpecs.empty()) learn.specs = learnSpecs;
      learn.lambdaOverride = learnLambda;
      learn.alphaScaleOverride = learnAlphaScale;
      learn.probes = parse_probe_list(learnProbes);
      nexting::cmd_learn(learn);
    } else if (solveCmd->parsed()) {
      solve.probes = parse_probe_list(solveProbes);
      nexting::cmd_solve(solve);
    } else if (reportCmd->parsed()) {
      for (const auto& r : reportRuns) report.runs.push_back(parse_run(r));
      if (!reportSolve.empty()) report.solveDir = reportSolve;
      nexting::cmd_report(report);
    }
  } catch (const std::exception& e) {
    std::cerr << "nexting: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
