#include "nexting/horde.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/partitioner.h>
#include <tbb/task_arena.h>

#include "nexting/common.hpp"

namespace nexting {

namespace {

void validate_spec(const PredictionSpec& s, std::size_t channelCount, std::size_t featureDim) {
  const std::string where = "prediction " + std::to_string(s.id);
  switch (s.target.kind) {
    case TargetSelector::Kind::SensorChannel:
      if (s.target.channel >= channelCount) throw ConfigError(where + ": target channel out of range");
      break;
    case TargetSelector::Kind::FeatureComponent:
      if (s.target.featureIndex >= featureDim) throw ConfigError(where + ": target feature index out of range");
      break;
    case TargetSelector::Kind::WheelPower:
      for (auto [v, c] : s.target.wheels) {
        if (v >= channelCount || c >= channelCount) throw ConfigError(where + ": power channel out of range");
      }
      break;
  }
  const auto& d = s.discount;
  auto validGamma = [](double g) { return g >= 0.0 && g < 1.0; };
  if (!validGamma(d.gamma)) throw ConfigError(where + ": gamma must be in [0,1)");
  if (d.kind == DiscountRule::Kind::StateDependent) {
    if (!validGamma(d.throttledGamma)) throw ConfigError(where + ": throttled gamma must be in [0,1)");
    if (d.triggerChannel >= channelCount) throw ConfigError(where + ": trigger channel out of range");
    if (!(d.triggerThreshold >= 0.0 && d.triggerThreshold <= 1.0)) {
      throw ConfigError(where + ": trigger threshold must be in [0,1]");
    }
  }
  if (!(s.lambda >= 0.0 && s.lambda <= 1.0)) throw ConfigError(where + ": lambda must be in [0,1]");
  if (!(s.alpha > 0.0) || !std::isfinite(s.alpha)) throw ConfigError(where + ": alpha must be positive");
}

// The requested worker count is honoured even above the hardware thread
// count; results do not depend on it either way.
tbb::task_arena& arena_for(unsigned workers) {
  static std::mutex mu;
  static std::map<unsigned, std::unique_ptr<tbb::task_arena>> arenas;
  static std::unique_ptr<tbb::global_control> limit;
  static unsigned limitValue = 0;
  std::lock_guard lock(mu);
  if (workers > limitValue) {
    // The effective limit is the minimum over live controls, so drop the old one first.
    limit.reset();
    limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, workers);
    limitValue = workers;
  }
  auto& slot = arenas[workers];
  if (!slot) slot = std::make_unique<tbb::task_arena>(static_cast<int>(workers));
  return *slot;
}

}  // namespace

PredictionBank build_bank(std::vector<PredictionSpec> specs, std::size_t n, std::size_t channelCount,
                          std::size_t targetFeatureDim) {
  if (targetFeatureDim == 0) targetFeatureDim = n;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].id != i) {
      throw ConfigError("prediction ids must be dense 0..k-1 in order; found id " + std::to_string(specs[i].id) +
                        " at position " + std::to_string(i));
    }
    validate_spec(specs[i], channelCount, targetFeatureDim);
  }
  PredictionBank bank;
  bank.n = n;
  bank.targetFeatureDim = targetFeatureDim;
  bank.channelCount = channelCount;
  bank.states.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) bank.states.emplace_back(n);
  bank.specs = std::move(specs);
  return bank;
}

double resolve_target(const PredictionSpec& spec, const SensorFrame& frame, const FeatureVector& fv) {
  const auto& t = spec.target;
  switch (t.kind) {
    case TargetSelector::Kind::SensorChannel:
      return frame.channels.at(t.channel);
    case TargetSelector::Kind::FeatureComponent:
      return fv.contains(static_cast<std::uint32_t>(t.featureIndex)) ? 1.0 : 0.0;
    case TargetSelector::Kind::WheelPower: {
      double p = 0.0;
      for (auto [v, c] : t.wheels) p += frame.channels.at(v) * frame.channels.at(c);
      return p;
    }
  }
  return 0.0;
}

double resolve_gamma(const PredictionSpec& spec, const SensorFrame& frame) {
  const auto& d = spec.discount;
  if (d.kind == DiscountRule::Kind::Constant) return d.gamma;
  return frame.channels.at(d.triggerChannel) >= d.triggerThreshold ? d.throttledGamma : d.gamma;
}

BankStepResult bank_step(PredictionBank& bank, const FeatureVector& fvPrev, const FeatureVector& fvNext,
                         const SensorFrame& framePrev, const SensorFrame& frameNext, unsigned workers,
                         const FeatureVector* targetFvNext) {
  const auto start = std::chrono::steady_clock::now();
  if (fvPrev.n != bank.n || fvNext.n != bank.n) throw InputError("feature dimension does not match bank");
  if (framePrev.channels.size() != bank.channelCount || frameNext.channels.size() != bank.channelCount) {
    throw InputError("frame width does not match bank");
  }
  const FeatureVector& targetFv = targetFvNext ? *targetFvNext : fvNext;
  if (targetFv.n != bank.targetFeatureDim) throw InputError("target feature dimension does not match bank");

  const std::size_t k = bank.size();
  BankStepResult result;
  result.predictions.assign(k, 0.0);
  std::vector<unsigned char> failed(k, 0);

  auto update = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& spec = bank.specs[i];
      const double reward = resolve_target(spec, frameNext, targetFv);
      const double gPrev = resolve_gamma(spec, framePrev);
      const double gNext = resolve_gamma(spec, frameNext);
      try {
        td_step(bank.states[i], fvPrev, fvNext, reward, gPrev, gNext, spec.lambda, spec.alpha);
        result.predictions[i] = bank.states[i].lastPrediction;
      } catch (const NumericError&) {
        failed[i] = 1;
      }
    }
  };

  if (workers <= 1 || k < 2) {
    update(0, k);
  } else {
    arena_for(workers).execute([&] {
      tbb::parallel_for(
          tbb::blocked_range<std::size_t>(0, k),
          [&](const tbb::blocked_range<std::size_t>& r) { update(r.begin(), r.end()); }, tbb::static_partitioner());
    });
  }

  if (auto it = std::find(failed.begin(), failed.end(), 1); it != failed.end()) {
    const auto id = bank.specs[static_cast<std::size_t>(it - failed.begin())].id;
    throw NumericError("prediction " + std::to_string(id) + " diverged: non-finite TD error or weights");
  }

  result.cycle = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
  bank.cycleStats.push_back(result.cycle);
  return result;
}

std::vector<double> bank_predict(const PredictionBank& bank, const FeatureVector& fv) {
  std::vector<double> out(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) out[i] = predict(bank.states[i], fv);
  return out;
}

namespace {

std::string channel_name(std::size_t ch, std::span<const std::string> names) {
  return ch < names.size() ? names[ch] : std::to_string(ch);
}

std::size_t parse_channel(std::string_view tok, std::span<const std::string> names, std::size_t line) {
  long long idx = 0;
  if (parse_int(tok, idx) && idx >= 0) return static_cast<std::size_t>(idx);
  const auto it = std::find(names.begin(), names.end(), tok);
  if (it == names.end()) {
    throw ParseError("line " + std::to_string(line) + ": unknown channel '" + std::string(tok) + "'");
  }
  return static_cast<std::size_t>(it - names.begin());
}

double parse_real(std::string_view tok, std::size_t line, const char* what) {
  double v = 0.0;
  if (!parse_double(tok, v)) {
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" + std::string(tok) + "'");
  }
  return v;
}

TargetSelector parse_target(std::string_view tok, std::span<const std::string> names, std::size_t line) {
  const auto colon = tok.find(':');
  const auto kind = tok.substr(0, colon);
  const auto arg = colon == std::string_view::npos ? std::string_view{} : tok.substr(colon + 1);
  if (kind == "sensor") return TargetSelector::sensor(parse_channel(arg, names, line));
  if (kind == "feature") {
    long long idx = 0;
    if (!parse_int(arg, idx) || idx < 0) throw ParseError("line " + std::to_string(line) + ": bad feature index");
    return TargetSelector::feature(static_cast<std::size_t>(idx));
  }
  if (kind == "power") {
    const auto pairs = split_char(arg, ',');
    if (pairs.size() != 3) throw ParseError("line " + std::to_string(line) + ": power target needs three wheels");
    std::array<std::pair<std::size_t, std::size_t>, 3> wheels{};
    for (std::size_t w = 0; w < 3; ++w) {
      const auto vc = split_char(pairs[w], '/');
      if (vc.size() != 2) throw ParseError("line " + std::to_string(line) + ": power wheel must be <volt>/<current>");
      wheels[w] = {parse_channel(vc[0], names, line), parse_channel(vc[1], names, line)};
    }
    return TargetSelector::power(wheels);
  }
  throw ParseError("line " + std::to_string(line) + ": unknown target '" + std::string(tok) + "'");
}

DiscountRule parse_discount(std::string_view tok, std::span<const std::string> names, std::size_t line) {
  const auto parts = split_char(tok, ':');
  if (parts[0] == "const" && parts.size() == 2) return DiscountRule::constant(parse_real(parts[1], line, "gamma"));
  if (parts[0] == "throttle" && parts.size() == 5) {
    return DiscountRule::throttled(parse_real(parts[1], line, "gamma"), parse_real(parts[2], line, "throttled gamma"),
                                   parse_channel(parts[3], names, line), parse_real(parts[4], line, "threshold"));
  }
  throw ParseError("line " + std::to_string(line) + ": bad discount rule '" + std::string(tok) + "'");
}

}  // namespace

std::vector<PredictionSpec> parse_spec_file(std::string_view text, std::span<const std::string> channelNames) {
  std::vector<PredictionSpec> specs;
  std::size_t lineNo = 0;
  for (auto line : split_char(text, '\n')) {
    ++lineNo;
    const auto tok = split_tokens(line);
    if (tok.empty()) continue;
    if (tok[0] != "pred" || tok.size() != 6) {
      throw ParseError("line " + std::to_string(lineNo) +
                       ": expected 'pred <id> <target> <discount-rule> <lambda> <alpha>'");
    }
    PredictionSpec s;
    long long id = 0;
    if (!parse_int(tok[1], id) || id < 0) throw ParseError("line " + std::to_string(lineNo) + ": bad id");
    s.id = static_cast<std::uint32_t>(id);
    s.target = parse_target(tok[2], channelNames, lineNo);
    s.discount = parse_discount(tok[3], channelNames, lineNo);
    s.lambda = parse_real(tok[4], lineNo, "lambda");
    s.alpha = parse_real(tok[5], lineNo, "alpha");
    specs.push_back(s);
  }
  return specs;
}

std::string format_target(const TargetSelector& t, std::span<const std::string> names) {
  switch (t.kind) {
    case TargetSelector::Kind::SensorChannel:
      return "sensor:" + channel_name(t.channel, names);
    case TargetSelector::Kind::FeatureComponent:
      return "feature:" + std::to_string(t.featureIndex);
    case TargetSelector::Kind::WheelPower: {
      std::string s = "power:";
      for (std::size_t w = 0; w < 3; ++w) {
        if (w) s += ',';
        s += channel_name(t.wheels[w].first, names) + "/" + channel_name(t.wheels[w].second, names);
      }
      return s;
    }
  }
  return {};
}

std::string format_discount(const DiscountRule& d, std::span<const std::string> names) {
  if (d.kind == DiscountRule::Kind::Constant) return "const:" + format_double(d.gamma);
  return "throttle:" + format_double(d.gamma) + ":" + format_double(d.throttledGamma) + ":" +
         channel_name(d.triggerChannel, names) + ":" + format_double(d.triggerThreshold);
}

std::string format_spec_file(std::span<const PredictionSpec> specs, std::span<const std::string> names) {
  std::ostringstream out;
  for (const auto& s : specs) {
    out << "pred " << s.id << ' ' << format_target(s.target, names) << ' ' << format_discount(s.discount, names)
        << ' ' << format_double(s.lambda) << ' ' << format_double(s.alpha) << '\n';
  }
  return out.str();
}

DefaultSpecs generate_default_specs(std::span<const std::string> channelNames, std::size_t n,
                                    std::size_t activePerStep, const DefaultSpecOptions& options) {
  if (activePerStep == 0) throw ConfigError("activePerStep must be positive");
  if (options.discounts.empty()) throw ConfigError("discount list is empty");
  std::size_t featureTargets = 0;
  if (options.featureTargets) {
    featureTargets = *options.featureTargets;
  } else {
    const std::size_t sensorSpecs = channelNames.size() * options.discounts.size();
    if (sensorSpecs > options.bankSize) throw ConfigError("bank size smaller than the sensor-target block");
    featureTargets = (options.bankSize - sensorSpecs) / options.discounts.size();
  }
  if (featureTargets > n) {
    throw ConfigError("cannot sample " + std::to_string(featureTargets) + " distinct feature targets from n=" +
                      std::to_string(n));
  }
  const double alpha = options.alphaScale / static_cast<double>(activePerStep);
  DefaultSpecs out;
  auto add = [&](TargetSelector target, DiscountRule rule) {
    PredictionSpec s;
    s.id = static_cast<std::uint32_t>(out.specs.size());
    s.target = target;
    s.discount = rule;
    s.lambda = options.lambda;
    s.alpha = alpha;
    out.specs.push_back(s);
  };

  for (std::size_t ch = 0; ch < channelNames.size(); ++ch) {
    for (double g : options.discounts) add(TargetSelector::sensor(ch), DiscountRule::constant(g));
  }

  // Partial Fisher-Yates: a seeded draw without replacement.
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  CounterRng rng(options.featureSeed);
  for (std::size_t i = 0; i < featureTargets; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
    out.featureComponents.push_back(pool[i]);
  }
  for (auto idx : out.featureComponents) {
    for (double g : options.discounts) add(TargetSelector::feature(idx), DiscountRule::constant(g));
  }

  if (options.includePower) {
    auto find = [&](const std::string& name) -> std::ptrdiff_t {
      auto it = std::find(channelNames.begin(), channelNames.end(), name);
      return it == channelNames.end() ? -1 : it - channelNames.begin();
    };
    std::array<std::pair<std::size_t, std::size_t>, 3> wheels{};
    bool ok = true;
    for (std::size_t w = 0; w < 3 && ok; ++w) {
      const auto v = find("motor_voltage" + std::to_string(w));
      const auto c = find("motor_current" + std::to_string(w));
      ok = v >= 0 && c >= 0;
      wheels[w] = {static_cast<std::size_t>(v), static_cast<std::size_t>(c)};
    }
    const auto light = find("light");
    if (ok && light >= 0) {
      add(TargetSelector::power(wheels),
          DiscountRule::throttled(options.powerGamma, options.powerThrottledGamma, static_cast<std::size_t>(light),
                                  options.powerTriggerThreshold));
    }
  }
  return out;
}

std::vector<std::uint32_t> default_probes(std::span<const PredictionSpec> specs,
                                          std::span<const std::string> channelNames, std::string_view lightChannel) {
  std::vector<std::uint32_t> probes;
  const auto it = std::find(channelNames.begin(), channelNames.end(), lightChannel);
  const auto light = static_cast<std::size_t>(it - channelNames.begin());
  for (const auto& s : specs) {
    const bool isLight = it != channelNames.end() && s.target.kind == TargetSelector::Kind::SensorChannel &&
                         s.target.channel == light;
    if (isLight || s.target.kind == TargetSelector::Kind::WheelPower) probes.push_back(s.id);
  }
  return probes;
}

}  // namespace nexting
