#include "nexting/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "nexting/common.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace nexting {

namespace {

// Sets flush-to-zero and denormals-are-zero for the scope, restoring the
// caller's mode on exit. Long-idle trace components decay through the
// subnormal range otherwise, which is very slow on x86.
class FlushDenormalsScope {
 public:
#if defined(__SSE2__)
  FlushDenormalsScope() noexcept : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormalsScope() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

void check_dim(const FeatureVector& fv, std::size_t n) {
  if (fv.n != n) {
    throw InputError("feature dimension " + std::to_string(fv.n) + " does not match weight dimension " +
                     std::to_string(n));
  }
  if (!fv.active.empty() && fv.active.back() >= n) throw InputError("feature index out of range");
}

// x - x is 0 for finite x and NaN otherwise; the OR reduction vectorizes.
unsigned decay_and_update(double* __restrict trace, double* __restrict theta, std::size_t begin, std::size_t end,
                          double decay, double step) noexcept {
  unsigned bad = 0;
  for (std::size_t j = begin; j < end; ++j) {
    trace[j] = decay * trace[j];
    theta[j] += step * trace[j];
    bad |= (theta[j] - theta[j]) != 0.0;
  }
  return bad;
}

}  // namespace

double DiscountRule::max_gamma() const noexcept {
  return kind == Kind::Constant ? gamma : std::max(gamma, throttledGamma);
}

double predict(std::span<const double> theta, const FeatureVector& fv) {
  check_dim(fv, theta.size());
  double v = 0.0;
  for (auto i : fv.active) v += theta[i];
  return v;
}

double predict(const LearnerState& state, const FeatureVector& fv) { return predict(state.theta, fv); }

void td_step(LearnerState& state, const FeatureVector& fvPrev, const FeatureVector& fvNext, double reward,
             double gammaPrev, double gammaNext, double lambda, double alpha) {
  const std::size_t n = state.n();
  check_dim(fvPrev, n);
  check_dim(fvNext, n);
  if (!std::isfinite(reward)) throw NumericError("non-finite reward " + format_double(reward));

  FlushDenormalsScope ftz;
  double* theta = state.theta.data();
  double* trace = state.trace.data();

  const double vPrev = predict(state.theta, fvPrev);
  const double vNext = predict(state.theta, fvNext);
  const double delta = reward + gammaNext * vNext - vPrev;
  if (!std::isfinite(delta)) throw NumericError("non-finite TD error");
  const double decay = gammaPrev * lambda;
  const double step = alpha * delta;

  // Fused pass: decay every trace component, add the previous features,
  // and apply the weight update. Equivalent element by element to the
  // separate dense passes.
  unsigned bad = 0;
  std::size_t j = 0;
  for (auto a : fvPrev.active) {
    bad |= decay_and_update(trace, theta, j, a, decay, step);
    trace[a] = decay * trace[a] + 1.0;
    theta[a] += step * trace[a];
    bad |= (theta[a] - theta[a]) != 0.0;
    j = a + 1;
  }
  bad |= decay_and_update(trace, theta, j, n, decay, step);
  if (bad) throw NumericError("non-finite weights after update");

  state.lastPrediction = predict(state.theta, fvNext);
}

void reset_traces(LearnerState& state) noexcept { std::fill(state.trace.begin(), state.trace.end(), 0.0); }

namespace {

constexpr char kMagic[8] = {'N', 'X', 'T', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, std::size_t n, std::span<const CheckpointView> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  put<std::uint64_t>(out, n);
  for (const auto& e : entries) {
    if (e.theta.size() != n) throw InputError("checkpoint entry has wrong dimension");
    put<std::uint32_t>(out, e.id);
    put<std::uint32_t>(out, 0);
    out.write(reinterpret_cast<const char*>(e.theta.data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path, std::size_t* nOut) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ParseError("not a checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != 1) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in, path);
  const auto n = get<std::uint64_t>(in, path);
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    e.id = get<std::uint32_t>(in, path);
    (void)get<std::uint32_t>(in, path);
    e.theta.resize(n);
    in.read(reinterpret_cast<char*>(e.theta.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ParseError("truncated checkpoint " + path.string());
  }
  if (nOut) *nOut = n;
  return entries;
}

}  // namespace nexting
