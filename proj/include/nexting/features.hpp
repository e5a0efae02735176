#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nexting {

/// One time step of normalized sensor readings plus the executed action.
struct SensorFrame {
  std::int64_t step = 0;
  int action = 0;
  std::vector<double> channels;  // each in [0, 1]

  bool operator==(const SensorFrame&) const = default;
};

/// Sparse binary vector over dimension n, stored as its sorted active set.
struct FeatureVector {
  std::vector<std::uint32_t> active;
  std::size_t n = 0;

  bool contains(std::uint32_t index) const;
  bool operator==(const FeatureVector&) const = default;
};

enum class TilingKind { OneDim, Pairwise };

struct TilingSpec {
  TilingKind kind = TilingKind::OneDim;
  std::size_t channelA = 0;
  std::size_t channelB = 0;  // pairwise only
  int intervals = 1;
  int tilings = 1;
  std::uint64_t offsetSeed = 0;

  int dims() const noexcept { return kind == TilingKind::Pairwise ? 2 : 1; }
  std::size_t cells_per_tiling() const noexcept;
};

/// Offset of one tiling along one input dimension, uniform in
/// [0, 1/intervals). A pure function of (seed, tiling, dim).
double tiling_offset(std::uint64_t seed, int tiling, int dim, int intervals) noexcept;

/// clamp(floor((value + offset) * intervals), 0, intervals - 1).
/// Throws InputError when value is outside [0, 1] or not finite.
int tile_index_1d(double value, int intervals, double offset);

/// Immutable tile coder. Index layout: 0 is the always-on bias feature,
/// then one block per spec in order, and within a spec one block of
/// intervals^dims cells per tiling.
class TileCoder {
 public:
  /// A coder with only the bias feature (n = 1).
  static TileCoder bias_only(std::size_t channelCount);

  /// Throws ConfigError on an empty spec list, a zero interval or tiling
  /// count, a channel id >= channelCount, or a duplicate (kind, channels, seed).
  static TileCoder build(std::vector<TilingSpec> specs, std::size_t channelCount);

  std::size_t n() const noexcept { return n_; }
  std::size_t active_per_step() const noexcept { return activePerStep_; }
  std::size_t channel_count() const noexcept { return channelCount_; }
  const std::vector<TilingSpec>& specs() const noexcept { return specs_; }

  /// First feature index of (spec, tiling).
  std::size_t block_offset(std::size_t spec, int tiling) const;
  double offset(std::size_t spec, int tiling, int dim) const;

  FeatureVector encode(const SensorFrame& frame) const;
  FeatureVector encode(std::span<const double> channels) const;
  void encode_into(std::span<const double> channels, FeatureVector& out) const;

 private:
  TileCoder() = default;

  std::vector<TilingSpec> specs_;
  std::vector<std::size_t> specBase_;   // first index of each spec's block
  std::vector<std::vector<double>> offsets_;  // per spec: tilings * dims
  std::size_t channelCount_ = 0;
  std::size_t n_ = 1;
  std::size_t activePerStep_ = 1;
};

/// Parses the line-oriented tiling format:
///   tile1d <channel> <intervals> <tilings> <seed>
///   tile2d <chanA> <chanB> <intervals> <tilings> <seed>
/// Channels may be given as an index or as a name from channelNames.
/// Throws ParseError with the line number on malformed input.
std::vector<TilingSpec> parse_tiling_config(std::string_view text,
                                            std::span<const std::string> channelNames);

std::string format_tiling_config(std::span<const TilingSpec> specs,
                                 std::span<const std::string> channelNames);

}  // namespace nexting
