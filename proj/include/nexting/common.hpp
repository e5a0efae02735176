#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nexting {

// Error categories. Every failure surfaced by the library is one of these.

/// Invalid configuration: tiling specs, prediction specs, run settings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input data: out-of-range channel values, mismatched dimensions.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values during learning, or a singular offline system.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A file that could not be parsed. The message carries the line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Manifests of chained commands disagree on log, tiling or spec identity.
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer. Used as the mixing function of the counter-based
/// generator below and for seeding.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: draw k of stream s is mix64(s ^ mix64(k)).
/// Platform independent, unlike the std:: distributions.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : stream_(mix64(seed)), counter_(counter) {}

  std::uint64_t next_u64() noexcept { return mix64(stream_ ^ mix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept;

  std::uint64_t counter() const noexcept { return counter_; }
  std::uint64_t stream() const noexcept { return stream_; }

 private:
  std::uint64_t stream_;
  std::uint64_t counter_;
};

/// Stateless draw, for values that must depend only on (seed, a, b).
inline double hashed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  const std::uint64_t h = mix64(mix64(seed) ^ mix64(a * 0x100000001b3ULL + b));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// FNV-1a 64 over a byte string, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string hash_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Shortest representation that round-trips exactly.
std::string format_double(double v);
/// Fixed notation with the given number of decimals.
std::string format_fixed(double v, int decimals);

/// Strict parsers: the whole token must be consumed.
bool parse_double(std::string_view token, double& out);
bool parse_int(std::string_view token, long long& out);

/// Whitespace tokenizer. A '#' starts a comment that runs to end of line.
std::vector<std::string> split_tokens(std::string_view line);
std::vector<std::string_view> split_char(std::string_view text, char sep);

}  // namespace nexting
