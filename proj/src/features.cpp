#include "nexting/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "nexting/common.hpp"

namespace nexting {

bool FeatureVector::contains(std::uint32_t index) const {
  return std::binary_search(active.begin(), active.end(), index);
}

std::size_t TilingSpec::cells_per_tiling() const noexcept {
  const auto k = static_cast<std::size_t>(intervals);
  return kind == TilingKind::Pairwise ? k * k : k;
}

double tiling_offset(std::uint64_t seed, int tiling, int dim, int intervals) noexcept {
  const double u = hashed_uniform(seed, static_cast<std::uint64_t>(tiling), static_cast<std::uint64_t>(dim));
  double off = u / intervals;
  // u < 1 already, but u / intervals can round up to exactly 1/intervals.
  if (off >= 1.0 / intervals) off = std::nextafter(1.0 / intervals, 0.0);
  return off;
}

int tile_index_1d(double value, int intervals, double offset) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw InputError("sensor value " + format_double(value) + " outside [0,1]");
  }
  const double scaled = std::floor((value + offset) * intervals);
  if (scaled < 0.0) return 0;
  if (scaled > intervals - 1) return intervals - 1;
  return static_cast<int>(scaled);
}

TileCoder TileCoder::bias_only(std::size_t channelCount) {
  TileCoder c;
  c.channelCount_ = channelCount;
  return c;
}

TileCoder TileCoder::build(std::vector<TilingSpec> specs, std::size_t channelCount) {
  if (specs.empty()) throw ConfigError("tile coder needs at least one tiling spec");
  std::set<std::tuple<int, std::size_t, std::size_t, std::uint64_t>> seen;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::string where = "tiling spec " + std::to_string(i);
    if (s.intervals < 1) throw ConfigError(where + ": intervals must be >= 1");
    if (s.tilings < 1) throw ConfigError(where + ": tilings must be >= 1");
    if (s.channelA >= channelCount || (s.kind == TilingKind::Pairwise && s.channelB >= channelCount)) {
      throw ConfigError(where + ": channel id out of range for " + std::to_string(channelCount) + " channels");
    }
    const std::size_t b = s.kind == TilingKind::Pairwise ? s.channelB : 0;
    if (!seen.emplace(static_cast<int>(s.kind), s.channelA, b, s.offsetSeed).second) {
      throw ConfigError(where + ": duplicate (kind, channel, seed)");
    }
  }

  TileCoder c;
  c.channelCount_ = channelCount;
  c.specs_ = std::move(specs);
  std::size_t next = 1;
  for (const auto& s : c.specs_) {
    c.specBase_.push_back(next);
    next += static_cast<std::size_t>(s.tilings) * s.cells_per_tiling();
    c.activePerStep_ += static_cast<std::size_t>(s.tilings);
    std::vector<double> offs;
    offs.reserve(static_cast<std::size_t>(s.tilings * s.dims()));
    for (int t = 0; t < s.tilings; ++t) {
      for (int d = 0; d < s.dims(); ++d) offs.push_back(tiling_offset(s.offsetSeed, t, d, s.intervals));
    }
    c.offsets_.push_back(std::move(offs));
  }
  c.n_ = next;
  return c;
}

std::size_t TileCoder::block_offset(std::size_t spec, int tiling) const {
  return specBase_.at(spec) + static_cast<std::size_t>(tiling) * specs_[spec].cells_per_tiling();
}

double TileCoder::offset(std::size_t spec, int tiling, int dim) const {
  return offsets_.at(spec).at(static_cast<std::size_t>(tiling * specs_[spec].dims() + dim));
}

FeatureVector TileCoder::encode(const SensorFrame& frame) const { return encode(frame.channels); }

FeatureVector TileCoder::encode(std::span<const double> channels) const {
  FeatureVector fv;
  encode_into(channels, fv);
  return fv;
}

void TileCoder::encode_into(std::span<const double> channels, FeatureVector& out) const {
  if (channels.size() != channelCount_) {
    throw InputError("frame has " + std::to_string(channels.size()) + " channels, coder expects " +
                     std::to_string(channelCount_));
  }
  for (double v : channels) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("sensor value " + format_double(v) + " outside [0,1]");
  }
  out.n = n_;
  out.active.clear();
  out.active.reserve(activePerStep_);
  out.active.push_back(0);
  for (std::size_t s = 0; s < specs_.size(); ++s) {
    const auto& spec = specs_[s];
    const auto& offs = offsets_[s];
    const std::size_t cells = spec.cells_per_tiling();
    std::size_t base = specBase_[s];
    for (int t = 0; t < spec.tilings; ++t, base += cells) {
      std::size_t cell;
      if (spec.kind == TilingKind::OneDim) {
        cell = static_cast<std::size_t>(tile_index_1d(channels[spec.channelA], spec.intervals, offs[t]));
      } else {
        const auto ia = tile_index_1d(channels[spec.channelA], spec.intervals, offs[2 * t]);
        const auto ib = tile_index_1d(channels[spec.channelB], spec.intervals, offs[2 * t + 1]);
        cell = static_cast<std::size_t>(ia) * static_cast<std::size_t>(spec.intervals) + static_cast<std::size_t>(ib);
      }
      out.active.push_back(static_cast<std::uint32_t>(base + cell));
    }
  }
}

namespace {

std::size_t resolve_channel(const std::string& token, std::span<const std::string> names, std::size_t line) {
  long long idx = 0;
  if (parse_int(token, idx)) {
    if (idx < 0) throw ParseError("line " + std::to_string(line) + ": negative channel id");
    return static_cast<std::size_t>(idx);
  }
  const auto it = std::find(names.begin(), names.end(), token);
  if (it == names.end()) throw ParseError("line " + std::to_string(line) + ": unknown channel '" + token + "'");
  return static_cast<std::size_t>(it - names.begin());
}

int parse_positive(const std::string& token, std::size_t line, const char* what) {
  long long v = 0;
  if (!parse_int(token, v) || v < 0 || v > 1'000'000) {
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" + token + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

std::vector<TilingSpec> parse_tiling_config(std::string_view text, std::span<const std::string> channelNames) {
  std::vector<TilingSpec> specs;
  std::size_t lineNo = 0;
  for (auto line : split_char(text, '\n')) {
    ++lineNo;
    const auto tok = split_tokens(line);
    if (tok.empty()) continue;
    TilingSpec s;
    std::size_t i = 1;
    if (tok[0] == "tile1d" && tok.size() == 5) {
      s.kind = TilingKind::OneDim;
      s.channelA = resolve_channel(tok[i++], channelNames, lineNo);
    } else if (tok[0] == "tile2d" && tok.size() == 6) {
      s.kind = TilingKind::Pairwise;
      s.channelA = resolve_channel(tok[i++], channelNames, lineNo);
      s.channelB = resolve_channel(tok[i++], channelNames, lineNo);
    } else {
      throw ParseError("line " + std::to_string(lineNo) + ": expected 'tile1d <ch> <intervals> <tilings> <seed>' or "
                       "'tile2d <chA> <chB> <intervals> <tilings> <seed>'");
    }
    s.intervals = parse_positive(tok[i++], lineNo, "intervals");
    s.tilings = parse_positive(tok[i++], lineNo, "tilings");
    long long seed = 0;
    if (!parse_int(tok[i], seed) || seed < 0) {
      throw ParseError("line " + std::to_string(lineNo) + ": bad seed '" + tok[i] + "'");
    }
    s.offsetSeed = static_cast<std::uint64_t>(seed);
    specs.push_back(s);
  }
  return specs;
}

std::string format_tiling_config(std::span<const TilingSpec> specs, std::span<const std::string> channelNames) {
  auto name = [&](std::size_t ch) { return ch < channelNames.size() ? channelNames[ch] : std::to_string(ch); };
  std::ostringstream out;
  for (const auto& s : specs) {
    if (s.kind == TilingKind::OneDim) {
      out << "tile1d " << name(s.channelA);
    } else {
      out << "tile2d " << name(s.channelA) << ' ' << name(s.channelB);
    }
    out << ' ' << s.intervals << ' ' << s.tilings << ' ' << s.offsetSeed << '\n';
  }
  return out.str();
}

}  // namespace nexting
