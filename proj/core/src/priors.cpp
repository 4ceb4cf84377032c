#include "sct/priors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "sct/errors.hpp"
#include "sct/marginal.hpp"

namespace sct::priors {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

const double kSqrt3 = std::sqrt(3.0);
const double kSqrt5 = std::sqrt(5.0);

}  // namespace

KernelKind parse_kernel(std::string_view name) {
  if (name == "matern-3/2" || name == "matern32") return KernelKind::matern32;
  if (name == "matern-5/2" || name == "matern52") return KernelKind::matern52;
  if (name == "squared-exponential" || name == "se") return KernelKind::squared_exponential;
  throw DomainError("unknown kernel '" + std::string(name) + "'");
}

std::string_view kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::matern32: return "matern-3/2";
    case KernelKind::matern52: return "matern-5/2";
    case KernelKind::squared_exponential: return "squared-exponential";
  }
  return "?";
}

double correlation(KernelKind kind, double r) {
  switch (kind) {
    case KernelKind::matern32: return (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r);
    case KernelKind::matern52:
      return (1.0 + kSqrt5 * r + 5.0 * r * r / 3.0) * std::exp(-kSqrt5 * r);
    case KernelKind::squared_exponential: return std::exp(-0.5 * r * r);
  }
  return 0.0;
}

double correlation_slope(KernelKind kind, double r) {
  switch (kind) {
    case KernelKind::matern32: return -3.0 * r * std::exp(-kSqrt3 * r);
    case KernelKind::matern52:
      return -(5.0 / 3.0) * r * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
    case KernelKind::squared_exponential: return -r * std::exp(-0.5 * r * r);
  }
  return 0.0;
}

Eigen::MatrixXd gram(const Kernel& kernel, const geo::LocationSet& locs,
                     std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  if (!(kernel.tau2 > 0.0) || !(kernel.ell > 0.0)) {
    throw DomainError("kernel hyperparameters must be positive");
  }
  Eigen::MatrixXd K(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      K(i, j) = kernel(locs.distance(rows[i], cols[j]));
    }
  }
  return K;
}

Eigen::MatrixXd BrownianCov::S(int D) {
  if (D < 1) throw DomainError("BrownianCov needs D >= 1");
  Eigen::MatrixXd S(D, D);
  for (int r = 0; r < D; ++r) {
    for (int c = 0; c < D; ++c) S(r, c) = static_cast<double>(std::min(r, c) + 1);
  }
  return S;
}

Eigen::MatrixXd BrownianCov::W(int D) {
  if (D < 1) throw DomainError("BrownianCov needs D >= 1");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(D, D);
  W.triangularView<Eigen::Lower>().setOnes();
  return W;
}

InducingSet make_inducing(const geo::MaximinOrdering& ordering, std::size_t M) {
  if (M < 1 || M > ordering.size()) {
    std::ostringstream os;
    os << "inducing count M = " << M << " must lie in [1, " << ordering.size() << "]";
    throw DomainError(os.str());
  }
  InducingSet s;
  s.indices.assign(ordering.order.begin(), ordering.order.begin() + static_cast<std::ptrdiff_t>(M));
  return s;
}

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& A, double* jitter_used,
                                std::string_view context) {
  const Eigen::Index n = A.rows();
  const double scale = n > 0 ? A.diagonal().mean() : 1.0;
  static constexpr double kLadder[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
  for (double rel : kLadder) {
    Eigen::MatrixXd B = A;
    if (rel > 0.0) B.diagonal().array() += rel * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
      if (jitter_used) *jitter_used = rel * scale;
      return llt.matrixL();
    }
  }
  std::ostringstream os;
  os << "Cholesky failed after jitter 1e-6";
  if (!context.empty()) os << " (" << context << ")";
  throw ConditioningError(os.str());
}

InducingGeometry::InducingGeometry(const geo::LocationSet& locs, InducingSet inducing)
    : inducing_(std::move(inducing)) {
  const std::size_t L = locs.size(), M = inducing_.size();
  if (M < 1 || M > L) throw DomainError("inducing set size must lie in [1, L]");
  d_lu_.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(M));
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t l = 0; l < L; ++l) d_lu_(l, m) = locs.distance(l, inducing_.indices[m]);
  }
  d_uu_.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < M; ++n) d_uu_(m, n) = d_lu_(inducing_.indices[m], n);
  }
}

LowRankBasis::LowRankBasis(const InducingGeometry& geom, KernelKind kind, double ell)
    : geom_(&geom), kind_(kind), ell_(ell) {
  if (!(ell > 0.0) || !std::isfinite(ell)) throw DomainError("length scale must be positive");
  r_lu_ = geom.dist_lu().unaryExpr([&](double d) { return correlation(kind, d / ell); });
  const Eigen::MatrixXd r_uu =
      geom.dist_uu().unaryExpr([&](double d) { return correlation(kind, d / ell); });
  std::ostringstream ctx;
  ctx << kernel_name(kind) << ", ell = " << ell;
  chol_ = robust_cholesky(r_uu, &jitter_, ctx.str());
}

Eigen::MatrixXd LowRankBasis::expand(const Eigen::MatrixXd& U, double tau, bool cumulative) const {
  Eigen::MatrixXd V = U;
  if (cumulative) {
    for (Eigen::Index d = 1; d < V.cols(); ++d) V.col(d) += V.col(d - 1);
  }
  chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(V);
  return tau * (r_lu_ * V);
}

void LowRankBasis::backprop(const Eigen::MatrixXd& U, double tau, bool cumulative,
                            const Eigen::MatrixXd& G, Eigen::MatrixXd& dU, double& dtau,
                            double* dell) const {
  const auto Lc = chol_.triangularView<Eigen::Lower>();
  const auto LcT = chol_.transpose().triangularView<Eigen::Upper>();

  Eigen::MatrixXd X = U;
  if (cumulative) {
    for (Eigen::Index d = 1; d < X.cols(); ++d) X.col(d) += X.col(d - 1);
  }
  LcT.solveInPlace(X);

  const Eigen::MatrixXd Y = r_lu_.transpose() * G;
  dtau = (Y.array() * X.array()).sum();

  dU = Y;
  Lc.solveInPlace(dU);
  dU *= tau;
  if (cumulative) {
    for (Eigen::Index d = dU.cols() - 2; d >= 0; --d) dU.col(d) += dU.col(d + 1);
  }

  if (!dell) return;
  const double ell = ell_;
  auto dr = [&](double d) {
    const double r = d / ell;
    return correlation_slope(kind_, r) * (-r / ell);
  };
  const Eigen::MatrixXd dR_lu = geom_->dist_lu().unaryExpr(dr);
  const Eigen::MatrixXd dR_uu = geom_->dist_uu().unaryExpr(dr);

  const double direct = (G.array() * (dR_lu * X).array()).sum();

  // A = X Y^T Lc^{-T};  C = Lc^{-T} Phi(Lc^T A) Lc^{-1}
  Eigen::MatrixXd A = X * Y.transpose();
  A = LcT.transpose().solve(A.transpose()).transpose();
  Eigen::MatrixXd P = chol_.transpose() * A;
  P.triangularView<Eigen::StrictlyUpper>().setZero();
  P.diagonal() *= 0.5;
  LcT.solveInPlace(P);
  P = Lc.transpose().solve(P.transpose()).transpose();
  const double through_chol = (P.array() * dR_uu.array()).sum();

  *dell = tau * (direct - through_chol);
}

Eigen::MatrixXd LowRankBasis::implied_correlation() const {
  Eigen::MatrixXd B = r_lu_.transpose();
  chol_.triangularView<Eigen::Lower>().solveInPlace(B);
  return B.transpose() * B;
}

double whitened_logprior(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) {
    if (!std::isfinite(v)) throw DomainError("whitened coefficients must be finite");
    s += v * v;
  }
  return -0.5 * s - 0.5 * static_cast<double>(u.size()) * kLog2Pi;
}

HyperValue softplus_hyperlink(double eta) {
  if (!std::isfinite(eta)) throw DomainError("hyperparameter must be finite");
  return {marginal::softplus(eta), 0.0};
}

double onion_logprior_dense(std::span<const double> beta, double tau2) {
  if (!(tau2 > 0.0)) throw DomainError("onion prior needs tau2 > 0");
  const int D = static_cast<int>(beta.size());
  const Eigen::MatrixXd S = tau2 * BrownianCov::S(D);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  const Eigen::Map<const Eigen::VectorXd> b(beta.data(), D);
  const Eigen::VectorXd w = llt.matrixL().solve(b);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * w.squaredNorm() - 0.5 * logdet - 0.5 * D * kLog2Pi;
}

double onion_logprior_increments(std::span<const double> beta, double tau2) {
  if (!(tau2 > 0.0)) throw DomainError("onion prior needs tau2 > 0");
  double s = 0.0, prev = 0.0;
  for (double b : beta) {
    const double d = b - prev;
    s += -0.5 * d * d / tau2 - 0.5 * std::log(tau2) - 0.5 * kLog2Pi;
    prev = b;
  }
  return s;
}

}  // namespace sct::priors
