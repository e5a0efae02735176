#include "nexting/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "nexting/common.hpp"

namespace nexting {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::vector<double> target_series(const PredictionSpec& spec, std::span<const SensorFrame> frames,
                                  std::span<const FeatureVector> features) {
  std::vector<double> out(frames.size());
  const bool needsFeatures = spec.target.kind == TargetSelector::Kind::FeatureComponent;
  if (needsFeatures && features.size() != frames.size()) {
    throw InputError("feature-component target needs the encoded feature log");
  }
  static const FeatureVector kEmpty{};
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out[t] = resolve_target(spec, frames[t], needsFeatures ? features[t] : kEmpty);
  }
  return out;
}

std::vector<double> gamma_series(const PredictionSpec& spec, std::span<const SensorFrame> frames) {
  std::vector<double> out(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) out[t] = resolve_gamma(spec, frames[t]);
  return out;
}

std::vector<FeatureVector> encode_all(const TileCoder& coder, std::span<const SensorFrame> frames) {
  std::vector<FeatureVector> out(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) coder.encode_into(frames[t].channels, out[t]);
  return out;
}

double nominal_gamma(const PredictionSpec& spec) { return spec.discount.gamma; }

OnlineResult run_online(const TileCoder& coder, std::span<const SensorFrame> frames,
                        std::vector<PredictionSpec> specs, const OnlineOptions& options) {
  if (frames.empty()) throw InputError("empty sensor log");
  for (auto& s : specs) {
    if (options.lambdaOverride) s.lambda = *options.lambdaOverride;
    if (options.alphaScaleOverride) s.alpha = *options.alphaScaleOverride / static_cast<double>(coder.active_per_step());
    if (options.biasOnly) s.alpha *= static_cast<double>(coder.active_per_step());
  }
  const std::size_t learnDim = options.biasOnly ? 1 : coder.n();
  OnlineResult result;
  result.bank = build_bank(std::move(specs), learnDim, coder.channel_count(), coder.n());
  auto& bank = result.bank;
  for (auto id : options.probes) {
    if (id >= bank.size()) throw ConfigError("probe id " + std::to_string(id) + " is not a prediction id");
  }
  result.probePredictions.assign(options.probes.size(), std::vector<double>(frames.size(), 0.0));
  bank.cycleStats.reserve(frames.size());

  const FeatureVector bias{{0u}, 1};
  FeatureVector full[2];
  coder.encode_into(frames[0].channels, full[0]);
  auto learnFv = [&](const FeatureVector& fv) -> const FeatureVector& { return options.biasOnly ? bias : fv; };
  {
    const auto v0 = bank_predict(bank, learnFv(full[0]));
    for (std::size_t p = 0; p < options.probes.size(); ++p) result.probePredictions[p][0] = v0[options.probes[p]];
  }
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const auto& prev = full[(t - 1) & 1];
    auto& next = full[t & 1];
    coder.encode_into(frames[t].channels, next);
    BankStepResult step;
    try {
      step = bank_step(bank, learnFv(prev), learnFv(next), frames[t - 1], frames[t], options.workers, &next);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(t));
    }
    for (std::size_t p = 0; p < options.probes.size(); ++p) {
      result.probePredictions[p][t] = step.predictions[options.probes[p]];
    }
  }
  return result;
}

CycleSummary summarize_cycles(std::span<const std::chrono::nanoseconds> cycles) {
  CycleSummary s;
  s.steps = cycles.size();
  if (cycles.empty()) return s;
  std::vector<double> ms(cycles.size());
  for (std::size_t i = 0; i < cycles.size(); ++i) ms[i] = static_cast<double>(cycles[i].count()) * 1e-6;
  std::sort(ms.begin(), ms.end());
  // Nearest-rank percentile.
  auto pct = [&](double q) {
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(ms.size())));
    return ms[std::clamp<std::size_t>(rank, 1, ms.size()) - 1];
  };
  s.medianMs = pct(0.5);
  s.p90Ms = pct(0.9);
  s.p99Ms = pct(0.99);
  s.maxMs = ms.back();
  return s;
}

OfflineResult run_offline(std::span<const FeatureVector> features, std::span<const SensorFrame> frames,
                          std::span<const PredictionSpec> specs, std::span<const std::uint32_t> probes, double ridge,
                          double eps) {
  if (probes.empty()) throw ConfigError("no probe predictions to solve");
  if (features.size() != frames.size()) throw InputError("feature log and frames differ in length");
  OfflineResult result;
  for (auto id : probes) {
    if (id >= specs.size()) throw ConfigError("probe id " + std::to_string(id) + " is not a prediction id");
    OfflineProbe probe;
    probe.id = id;
    const auto& spec = specs[id];
    probe.returns = compute_returns(target_series(spec, frames, features), gamma_series(spec, frames), eps);
    result.probes.push_back(std::move(probe));
  }
  result.window = result.probes.front().returns.size();
  for (const auto& p : result.probes) result.window = std::min(result.window, p.returns.size());

  OfflineSolver solver(features, result.window, ridge);
  result.ridge = solver.ridge();
  for (auto& p : result.probes) {
    p.solution = solver.solve(p.returns);
    p.predictions.resize(result.window);
    for (std::size_t t = 0; t < result.window; ++t) p.predictions[t] = predict(p.solution.thetaStar, features[t]);
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_predictions_csv(std::span<const std::uint32_t> probes,
                                   const std::vector<std::vector<double>>& series) {
  std::string out = "step";
  for (auto p : probes) out += ",p" + std::to_string(p);
  out += '\n';
  const std::size_t rows = series.empty() ? 0 : series.front().size();
  for (std::size_t t = 0; t < rows; ++t) {
    out += std::to_string(t);
    for (const auto& s : series) {
      out += ',';
      out += format_double(s[t]);
    }
    out += '\n';
  }
  return out;
}

struct PredictionTable {
  std::vector<std::uint32_t> probes;
  std::vector<std::vector<double>> series;
};

PredictionTable read_predictions_csv(const fs::path& path) {
  const auto text = read_text_file(path);
  auto lines = split_char(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(path.string() + ": missing header");
  PredictionTable table;
  const auto header = split_char(lines[0], ',');
  for (std::size_t i = 1; i < header.size(); ++i) {
    long long id = 0;
    if (header[i].size() < 2 || header[i][0] != 'p' || !parse_int(header[i].substr(1), id)) {
      throw ParseError(path.string() + ": bad column '" + std::string(header[i]) + "'");
    }
    table.probes.push_back(static_cast<std::uint32_t>(id));
  }
  table.series.assign(table.probes.size(), {});
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cols = split_char(lines[li], ',');
    if (cols.size() != header.size()) throw ParseError(path.string() + ": line " + std::to_string(li + 1) + ": wrong column count");
    for (std::size_t c = 1; c < cols.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cols[c], v)) throw ParseError(path.string() + ": line " + std::to_string(li + 1) + ": bad value");
      table.series[c - 1].push_back(v);
    }
  }
  return table;
}

json log_identity(const fs::path& path, const std::string& text, std::size_t rows) {
  return json{{"path", path.string()}, {"hash", fnv1a_hex(text)}, {"rows", rows}};
}

struct LoadedInputs {
  std::string logText;
  SensorLog log;
  std::string tilingText;
  TileCoder coder = TileCoder::bias_only(0);
};

LoadedInputs load_log_and_tiling(const fs::path& logPath, const fs::path& tilingPath) {
  LoadedInputs in;
  in.logText = read_text_file(logPath);
  in.log = parse_log(in.logText);
  if (in.log.frames.empty()) throw InputError("sensor log " + logPath.string() + " has no frames");
  in.tilingText = read_text_file(tilingPath);
  in.coder = TileCoder::build(parse_tiling_config(in.tilingText, in.log.channelNames), in.log.channelNames.size());
  return in;
}

std::vector<std::uint32_t> resolve_probes(std::vector<std::uint32_t> requested, std::span<const PredictionSpec> specs,
                                          std::span<const std::string> names) {
  if (requested.empty()) requested = default_probes(specs, names);
  if (requested.empty()) throw ConfigError("probe list is empty");
  for (auto id : requested) {
    if (id >= specs.size()) throw ConfigError("probe id " + std::to_string(id) + " is not a prediction id");
  }
  return requested;
}

}  // namespace

void cmd_simulate(const SimulateConfig& config) {
  if (config.steps < 1) throw ConfigError("--steps must be at least 1");
  SimParams params;
  if (config.params) params = parse_sim_params(read_text_file(*config.params));
  params.seed = config.seed;
  const auto run = simulate(params, config.steps);
  const auto text = format_log(run.frames, sim_channel_names());
  if (config.out.has_parent_path()) ensure_dir(config.out.parent_path());
  write_text_file(config.out, text);

  json pauses = json::array();
  for (auto [a, b] : run.pauses) pauses.push_back({a, b});
  json manifest{{"command", "simulate"},
                {"log", log_identity(config.out, text, run.frames.size())},
                {"bytes", text.size()},
                {"seed", params.seed},
                {"channels", sim_channel_names()},
                {"params", format_sim_params(params)},
                {"pause_intervals", pauses}};
  write_json(fs::path(config.out.string() + ".manifest.json"), manifest);
}

void cmd_learn(const LearnConfig& config) {
  auto in = load_log_and_tiling(config.log, config.tiling);
  const auto& names = in.log.channelNames;

  std::string specText;
  json featureSample = nullptr;
  if (config.specs) {
    specText = read_text_file(*config.specs);
  } else {
    const auto generated = generate_default_specs(names, in.coder.n(), in.coder.active_per_step(), config.defaults);
    specText = format_spec_file(generated.specs, names);
    featureSample = json{{"seed", config.defaults.featureSeed},
                         {"without_replacement", true},
                         {"components", generated.featureComponents}};
  }
  auto specs = parse_spec_file(specText, names);
  const auto probes = resolve_probes(config.probes, specs, names);

  OnlineOptions options;
  options.workers = std::max(1u, config.workers);
  options.lambdaOverride = config.lambdaOverride;
  options.alphaScaleOverride = config.alphaScaleOverride;
  options.biasOnly = config.biasOnly;
  options.probes = probes;
  const auto result = run_online(in.coder, in.log.frames, specs, options);

  ensure_dir(config.outDir);
  write_text_file(config.outDir / "specs.txt", specText);
  write_text_file(config.outDir / "tiling.cfg", in.tilingText);
  write_text_file(config.outDir / "predictions.csv", format_predictions_csv(probes, result.probePredictions));

  std::vector<CheckpointView> views;
  views.reserve(result.bank.size());
  for (std::size_t i = 0; i < result.bank.size(); ++i) {
    views.push_back({result.bank.specs[i].id, result.bank.states[i].theta});
  }
  write_checkpoint(config.outDir / "weights.bin", result.bank.n, views);

  const auto cycles = summarize_cycles(result.bank.cycleStats);
  write_json(config.outDir / "cycle_stats.json", json{{"workers", options.workers},
                                                      {"steps", cycles.steps},
                                                      {"median_ms", cycles.medianMs},
                                                      {"p90_ms", cycles.p90Ms},
                                                      {"p99_ms", cycles.p99Ms},
                                                      {"max_ms", cycles.maxMs}});

  json manifest{{"command", "learn"},
                {"log", log_identity(config.log, in.logText, in.log.frames.size())},
                {"tiling_hash", fnv1a_hex(in.tilingText)},
                {"spec_hash", fnv1a_hex(specText)},
                {"n", in.coder.n()},
                {"active_per_step", in.coder.active_per_step()},
                {"spec_count", specs.size()},
                {"representation", config.biasOnly ? "bias" : "tile"},
                {"lambda_override", config.lambdaOverride ? json(*config.lambdaOverride) : json(nullptr)},
                {"alpha_scale_override", config.alphaScaleOverride ? json(*config.alphaScaleOverride) : json(nullptr)},
                {"probes", probes},
                {"feature_sample", featureSample},
                {"weights", "weights.bin"},
                {"predictions", "predictions.csv"}};
  write_json(config.outDir / "manifest.json", manifest);
}

void cmd_solve(const SolveConfig& config) {
  auto in = load_log_and_tiling(config.log, config.tiling);
  const auto& names = in.log.channelNames;
  const auto specText = read_text_file(config.specs);
  const auto specs = parse_spec_file(specText, names);
  // Validates ids and references the same way learn does.
  (void)build_bank(specs, 1, names.size(), in.coder.n());
  const auto probes = resolve_probes(config.probes, specs, names);

  const auto features = encode_all(in.coder, in.log.frames);
  const auto result = run_offline(features, in.log.frames, specs, probes, config.ridge, config.eps);

  ensure_dir(config.outDir);
  std::vector<CheckpointView> views;
  json residuals = json::array();
  std::vector<std::vector<double>> series;
  for (const auto& p : result.probes) {
    views.push_back({p.id, p.solution.thetaStar});
    residuals.push_back({{"id", p.id},
                         {"residual_rmse", p.solution.residualRmse},
                         {"return_horizon", p.returns.horizon},
                         {"returns", "returns_p" + std::to_string(p.id) + ".csv"}});
    write_returns_csv(config.outDir / ("returns_p" + std::to_string(p.id) + ".csv"), p.returns);
    series.push_back(p.predictions);
  }
  write_checkpoint(config.outDir / "thetastar.bin", in.coder.n(), views);
  write_text_file(config.outDir / "thetastar_predictions.csv", format_predictions_csv(probes, series));
  write_json(config.outDir / "manifest.json",
             json{{"command", "solve"},
                  {"log", log_identity(config.log, in.logText, in.log.frames.size())},
                  {"tiling_hash", fnv1a_hex(in.tilingText)},
                  {"spec_hash", fnv1a_hex(specText)},
                  {"n", in.coder.n()},
                  {"window", result.window},
                  {"ridge", result.ridge},
                  {"eps", config.eps},
                  {"probes", probes},
                  {"solutions", residuals}});
}

void cmd_report(const ReportConfig& config) {
  if (config.runs.empty() && !config.solveDir) throw ConfigError("report needs at least one run or a solve output");
  const auto logText = read_text_file(config.log);
  const auto log = parse_log(logText);
  const auto logHash = fnv1a_hex(logText);

  // Manifest chain: every input must agree on log, tiling and spec identity.
  std::vector<std::pair<std::string, fs::path>> inputs = config.runs;
  if (config.solveDir) inputs.emplace_back("thetastar", *config.solveDir);
  std::string tilingHash, specHash;
  std::vector<json> manifests;
  for (const auto& [label, dir] : inputs) {
    auto m = read_json(dir / "manifest.json");
    const auto mLog = m.at("log").at("hash").get<std::string>();
    if (mLog != logHash) throw ConsistencyError(label + ": manifest log hash differs from " + config.log.string());
    const auto t = m.at("tiling_hash").get<std::string>();
    const auto s = m.at("spec_hash").get<std::string>();
    if (tilingHash.empty()) {
      tilingHash = t;
      specHash = s;
    } else if (t != tilingHash || s != specHash) {
      throw ConsistencyError(label + ": tiling or spec hash disagrees with the other inputs");
    }
    manifests.push_back(std::move(m));
  }

  // Specs and tiling come from the first run directory (or the solve dir's
  // log/tiling chain, which is checked equal above).
  fs::path specDir = config.runs.empty() ? fs::path{} : config.runs.front().second;
  std::vector<PredictionSpec> specs;
  std::optional<TileCoder> coder;
  if (!specDir.empty()) {
    specs = parse_spec_file(read_text_file(specDir / "specs.txt"), log.channelNames);
    coder = TileCoder::build(parse_tiling_config(read_text_file(specDir / "tiling.cfg"), log.channelNames),
                             log.channelNames.size());
  } else {
    throw ConfigError("report needs at least one learn run to recover the prediction specs");
  }

  std::vector<PredictionTable> tables;
  for (const auto& [label, dir] : config.runs) tables.push_back(read_predictions_csv(dir / "predictions.csv"));
  std::optional<PredictionTable> thetaStar;
  if (config.solveDir) thetaStar = read_predictions_csv(*config.solveDir / "thetastar_predictions.csv");

  std::set<std::uint32_t> probeSet;
  for (const auto& t : tables) probeSet.insert(t.probes.begin(), t.probes.end());
  if (probeSet.empty()) throw ConfigError("probe list is empty");

  bool needFeatures = false;
  for (auto id : probeSet) {
    if (id >= specs.size()) throw ConsistencyError("probe " + std::to_string(id) + " not in specs");
    needFeatures |= specs[id].target.kind == TargetSelector::Kind::FeatureComponent;
  }
  std::vector<FeatureVector> features;
  if (needFeatures) features = encode_all(*coder, log.frames);

  const auto eventIt = std::find(log.channelNames.begin(), log.channelNames.end(), config.eventChannel);
  if (eventIt == log.channelNames.end()) throw ConfigError("event channel '" + config.eventChannel + "' not in log");
  const auto eventCh = static_cast<std::size_t>(eventIt - log.channelNames.begin());
  std::vector<double> eventSignal(log.frames.size());
  for (std::size_t t = 0; t < log.frames.size(); ++t) eventSignal[t] = log.frames[t].channels[eventCh];
  auto onsets = detect_events(eventSignal, config.eventThreshold, config.refractory);

  ensure_dir(config.outDir);
  json summary{{"log_hash", logHash}, {"tiling_hash", tilingHash}, {"spec_hash", specHash},
               {"bin_size", config.binSize}, {"events_detected", onsets.size()}, {"probes", json::array()}};

  for (auto id : probeSet) {
    const auto& spec = specs[id];
    const auto targets = target_series(spec, log.frames, features);
    const auto returns = compute_returns(targets, gamma_series(spec, log.frames));
    const double gamma = nominal_gamma(spec);
    std::size_t evalLen = returns.size();
    if (thetaStar) evalLen = std::min(evalLen, thetaStar->series.empty() ? evalLen : thetaStar->series.front().size());
    const std::size_t quarterStart = evalLen - evalLen / 4;

    json probeJson{{"id", id}, {"gamma", gamma}, {"eval_steps", evalLen}, {"curves", json::object()}};
    // Keep alignment to the last maxEvents onsets that fit the window.
    std::vector<std::size_t> usable;
    for (auto o : onsets) {
      if (o >= config.window.before && o + config.window.after < evalLen) usable.push_back(o);
    }
    if (usable.size() > config.maxEvents) usable.erase(usable.begin(), usable.end() - static_cast<long>(config.maxEvents));

    auto emit = [&](const std::string& label, std::span<const double> pred) {
      const auto p = pred.first(evalLen);
      const auto r = std::span<const double>(returns.values).first(evalLen);
      const auto curve = normalized_rmse(p, r, gamma, config.binSize);
      const std::string stem = label + "_p" + std::to_string(id);
      write_curve_csv(config.outDir / ("curve_" + stem + ".csv"), curve);
      json entry{{"curve", "curve_" + stem + ".csv"},
                 {"final_quarter_nrmse", normalized_rmse_span(p, r, gamma, quarterStart, evalLen)}};
      if (!usable.empty()) {
        const std::vector<std::span<const double>> series{std::span<const double>(targets).first(evalLen), r, p};
        const auto avg = align_events(usable, series, config.window);
        write_aligned_csv(config.outDir / ("aligned_" + stem + ".csv"), avg);
        entry["aligned"] = "aligned_" + stem + ".csv";
        entry["aligned_events"] = avg.eventCount;
      }
      probeJson["curves"][label] = entry;
    };

    for (std::size_t r = 0; r < config.runs.size(); ++r) {
      const auto& table = tables[r];
      const auto it = std::find(table.probes.begin(), table.probes.end(), id);
      if (it == table.probes.end()) continue;
      const auto& series = table.series[static_cast<std::size_t>(it - table.probes.begin())];
      if (series.size() < evalLen) throw ConsistencyError(config.runs[r].first + ": prediction series too short");
      emit(config.runs[r].first, series);
    }
    if (thetaStar) {
      const auto it = std::find(thetaStar->probes.begin(), thetaStar->probes.end(), id);
      if (it != thetaStar->probes.end()) {
        emit("thetastar", thetaStar->series[static_cast<std::size_t>(it - thetaStar->probes.begin())]);
      }
    }
    summary["probes"].push_back(probeJson);
  }
  write_json(config.outDir / "summary.json", summary);
}

}  // namespace nexting
