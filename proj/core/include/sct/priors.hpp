#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sct/geometry.hpp"

namespace sct::priors {

enum class KernelKind { matern32, matern52, squared_exponential };

KernelKind parse_kernel(std::string_view name);
std::string_view kernel_name(KernelKind kind);

/// Correlation rho(r) at scaled distance r = dist / ell, and d rho / d r.
double correlation(KernelKind kind, double r);
double correlation_slope(KernelKind kind, double r);

/// Stationary isotropic covariance tau2 * rho(dist / ell).
struct Kernel {
  KernelKind kind = KernelKind::matern32;
  double tau2 = 1.0;
  double ell = 1.0;

  double operator()(double dist) const { return tau2 * correlation(kind, dist / ell); }
};

/// Covariance matrix between two index subsets of a location set.
Eigen::MatrixXd gram(const Kernel& kernel, const geo::LocationSet& locs,
                     std::span<const std::size_t> rows, std::span<const std::size_t> cols);

/// Discrete Brownian-motion covariance S[r, c] = min(r, c) (1-based) and its
/// lower Cholesky factor W, the lower-triangular matrix of ones.
struct BrownianCov {
  static Eigen::MatrixXd S(int D);
  static Eigen::MatrixXd W(int D);
};

/// The first M maximin-ordered locations.
struct InducingSet {
  std::vector<std::size_t> indices;  ///< original location indices
  std::size_t size() const noexcept { return indices.size(); }
};

InducingSet make_inducing(const geo::MaximinOrdering& ordering, std::size_t M);

/// Lower Cholesky factor of A + jitter * I, escalating jitter 0, 1e-10, ..., 1e-6
/// relative to the mean diagonal. Throws ConditioningError past the ladder.
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& A, double* jitter_used = nullptr,
                                std::string_view context = {});

/// Distances between all locations and the inducing locations; independent
/// of kernel hyperparameters, so built once per model.
class InducingGeometry {
 public:
  InducingGeometry() = default;
  InducingGeometry(const geo::LocationSet& locs, InducingSet inducing);

  std::size_t location_count() const noexcept { return static_cast<std::size_t>(d_lu_.rows()); }
  std::size_t inducing_count() const noexcept { return inducing_.size(); }
  const InducingSet& inducing() const noexcept { return inducing_; }
  const Eigen::MatrixXd& dist_lu() const noexcept { return d_lu_; }
  const Eigen::MatrixXd& dist_uu() const noexcept { return d_uu_; }

 private:
  InducingSet inducing_;
  Eigen::MatrixXd d_lu_;  // L x M
  Eigen::MatrixXd d_uu_;  // M x M
};

/// Whitened low-rank expansion of a spatial field with correlation kernel of
/// length scale ell:
///
///   field = tau * R_Lu * Lc^{-T} * V,   V = U * W^T (cumulative) or U,
///
/// with Lc Lc^T = R_uu + jitter. For D columns with cumulative = true the
/// implied covariance of vec(field) is S kron tau^2 R_Lu R_uu^{-1} R_uL.
class LowRankBasis {
 public:
  LowRankBasis(const InducingGeometry& geom, KernelKind kind, double ell);

  double ell() const noexcept { return ell_; }
  double jitter() const noexcept { return jitter_; }
  const Eigen::MatrixXd& r_lu() const noexcept { return r_lu_; }
  const Eigen::MatrixXd& chol() const noexcept { return chol_; }

  /// U is M x D; returns the L x D field.
  Eigen::MatrixXd expand(const Eigen::MatrixXd& U, double tau, bool cumulative) const;

  /// Given G = d f / d field (L x D), writes d f / d U, d f / d tau and, if
  /// requested, d f / d ell.
  void backprop(const Eigen::MatrixXd& U, double tau, bool cumulative, const Eigen::MatrixXd& G,
                Eigen::MatrixXd& dU, double& dtau, double* dell) const;

  /// Dense implied covariance of one field column (L x L), tau = 1.
  Eigen::MatrixXd implied_correlation() const;

 private:
  const InducingGeometry* geom_;
  KernelKind kind_;
  double ell_;
  double jitter_ = 0.0;
  Eigen::MatrixXd r_lu_;
  Eigen::MatrixXd chol_;
};

/// -0.5 * ||u||^2 - (n / 2) log(2 pi); its gradient is -u.
double whitened_logprior(std::span<const double> u);

/// softplus(eta) for a hyperparameter; the prior on eta is flat so the log
/// prior contribution is zero.
struct HyperValue {
  double value;
  double log_prior;
};
HyperValue softplus_hyperlink(double eta);

/// log N(beta; 0, tau2 * S) by dense Cholesky of S.
double onion_logprior_dense(std::span<const double> beta, double tau2);
/// The same density as a random walk: beta_1 ~ N(0, tau2), beta_d ~ N(beta_{d-1}, tau2).
double onion_logprior_increments(std::span<const double> beta, double tau2);

}  // namespace sct::priors
