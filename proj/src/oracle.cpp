#include "nexting/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "nexting/common.hpp"

namespace nexting {

std::size_t truncation_horizon(double maxGamma, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("truncation eps must be in (0,1)");
  if (!(maxGamma >= 0.0 && maxGamma < 1.0)) throw InputError("gamma must be in [0,1) for a finite horizon");
  std::size_t k = 1;
  double p = maxGamma;
  while (p > eps) {
    p *= maxGamma;
    ++k;
  }
  return k;
}

ReturnSeries compute_returns(std::span<const double> targets, std::span<const double> gammas, double eps) {
  if (targets.size() != gammas.size()) throw InputError("targets and gammas differ in length");
  double maxGamma = 0.0;
  for (double g : gammas) {
    if (!(g >= 0.0 && g < 1.0)) throw InputError("gamma " + format_double(g) + " outside [0,1): infinite horizon");
    maxGamma = std::max(maxGamma, g);
  }
  for (double r : targets) {
    if (!std::isfinite(r)) throw InputError("non-finite target value");
  }
  ReturnSeries out;
  out.eps = eps;
  out.horizon = truncation_horizon(maxGamma, eps);
  const std::size_t N = targets.size();
  if (N <= out.horizon) {
    throw InputError("log of " + std::to_string(N) + " steps is not longer than the truncation horizon of " +
                     std::to_string(out.horizon) + " steps");
  }
  std::vector<double> g(N, 0.0);
  for (std::size_t t = N - 1; t-- > 0;) g[t] = targets[t + 1] + gammas[t + 1] * g[t + 1];
  g.resize(N - out.horizon);
  out.values = std::move(g);
  return out;
}

double default_ridge(double gramTrace, std::size_t n) { return 1e-8 * gramTrace / static_cast<double>(n); }

struct OfflineSolver::Impl {
  Eigen::MatrixXd factor;  // lower triangle holds L after factorization
};

OfflineSolver::OfflineSolver(std::span<const FeatureVector> featureLog, std::size_t window, double ridge)
    : impl_(std::make_unique<Impl>()), log_(featureLog), window_(window) {
  if (window == 0 || window > featureLog.size()) throw InputError("offline window outside the feature log");
  n_ = featureLog.front().n;
  if (n_ == 0) throw InputError("empty feature dimension");

  auto& A = impl_->factor;
  A.setZero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  double* data = A.data();
  const auto ld = static_cast<std::size_t>(A.outerStride());
  for (std::size_t t = 0; t < window; ++t) {
    const auto& fv = featureLog[t];
    if (fv.n != n_) throw InputError("feature log has inconsistent dimension");
    const auto& act = fv.active;
    const std::size_t c = act.size();
    // Lower triangle, column-major: rows a_i >= a_j within column a_j.
    for (std::size_t j = 0; j < c; ++j) {
      double* col = data + static_cast<std::size_t>(act[j]) * ld;
      for (std::size_t i = j; i < c; ++i) col[act[i]] += 1.0;
    }
    gramTrace_ += static_cast<double>(c);
  }

  ridge_ = ridge < 0.0 ? default_ridge(gramTrace_, n_) : ridge;
  double maxDiag = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    A(i, i) += ridge_;
    maxDiag = std::max(maxDiag, A(i, i));
  }

  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(A);
  bool singular = llt.info() != Eigen::Success || maxDiag <= 0.0;
  if (!singular) {
    const double floor = 1e-12 * maxDiag;
    for (Eigen::Index i = 0; i < A.rows() && !singular; ++i) {
      const double p = A(i, i) * A(i, i);
      singular = !(p > floor);
    }
  }
  if (singular) {
    throw NumericError("offline least-squares system is singular (ridge = " + format_double(ridge_) +
                       "); use a ridge > 0");
  }
}

OfflineSolver::~OfflineSolver() = default;
OfflineSolver::OfflineSolver(OfflineSolver&&) noexcept = default;
OfflineSolver& OfflineSolver::operator=(OfflineSolver&&) noexcept = default;

std::vector<double> OfflineSolver::gram_dense() const {
  std::vector<double> out(n_ * n_, 0.0);
  for (std::size_t t = 0; t < window_; ++t) {
    for (auto a : log_[t].active) {
      for (auto b : log_[t].active) out[a * n_ + b] += 1.0;
    }
  }
  return out;
}

OfflineSolution OfflineSolver::solve(const ReturnSeries& returns) const {
  if (returns.size() < window_) throw InputError("return series shorter than the solver window");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
  for (std::size_t t = 0; t < window_; ++t) {
    const double g = returns.values[t];
    for (auto a : log_[t].active) b[a] += g;
  }
  const Eigen::MatrixXd& factor = impl_->factor;
  factor.triangularView<Eigen::Lower>().solveInPlace(b);
  factor.transpose().triangularView<Eigen::Upper>().solveInPlace(b);

  OfflineSolution sol;
  sol.thetaStar.assign(b.data(), b.data() + b.size());
  sol.ridge = ridge_;
  for (double v : sol.thetaStar) {
    if (!std::isfinite(v)) throw NumericError("offline solution is not finite");
  }
  sol.residualRmse = offline_rmse(sol.thetaStar, log_.first(window_), std::span(returns.values).first(window_));
  return sol;
}

OfflineSolution solve_offline(std::span<const FeatureVector> featureLog, const ReturnSeries& returns, double ridge) {
  if (featureLog.size() < returns.size()) throw InputError("feature log shorter than the return series");
  return OfflineSolver(featureLog, returns.size(), ridge).solve(returns);
}

double offline_rmse(std::span<const double> theta, std::span<const FeatureVector> featureLog,
                    std::span<const double> returns) {
  const std::size_t m = std::min(featureLog.size(), returns.size());
  if (m == 0) throw InputError("no overlap between feature log and returns");
  double sum = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    double v = 0.0;
    for (auto a : featureLog[t].active) v += theta[a];
    const double e = v - returns[t];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(m));
}

void write_returns_csv(const std::filesystem::path& path, const ReturnSeries& returns) {
  std::ostringstream out;
  out << "step,value\n";
  for (std::size_t t = 0; t < returns.size(); ++t) out << t << ',' << format_double(returns.values[t]) << '\n';
  write_text_file(path, out.str());
}

}  // namespace nexting
