#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sct/geometry.hpp"
#include "sct/optimizer.hpp"

namespace sct::tm {

/// theta^T in storage order.
enum HyperIndex : std::size_t { kD1 = 0, kD2, kQ, kGamma, kSigma1, kSigma2, kHyperCount };

struct TMHyper {
  std::array<double, kHyperCount> theta{};
};

struct TMSettings {
  double g = 4.0;            ///< prior spread of d_i^2
  double epsilon = 0.01;     ///< neighbor-weight threshold for the conditioning cap
  std::size_t max_conditioning = 30;
  bool linear = false;       ///< sigma_i^2 = 0: linear map components only
};

struct PriorQuantities {
  double alpha = 0.0;
  double beta = 0.0;
  double expected_d2 = 0.0;
  double sigma2 = 0.0;
};

/// Throws DomainError unless delta > 0 and g > 0.
PriorQuantities prior_quantities(double delta, const TMHyper& h, double g);

/// Largest j >= 1 with exp(-j exp(theta_q)) >= epsilon, floored at 1 and
/// capped at hard_cap.
std::size_t conditioning_cap(double theta_q, double epsilon, std::size_t hard_cap = 1u << 20);

/// Per-location kernel context.
struct KernelContext {
  std::vector<double> q;     ///< diag(Q_i), q_j = exp(-j exp(theta_q))
  double sigma2 = 0.0;
  double expected_d2 = 1.0;
  double gamma = 1.0;
};

KernelContext kernel_context(std::size_t n_neighbors, double delta, const TMHyper& h,
                             const TMSettings& s);

/// E^{-1} [x^T Q x' + sigma^2 rho(sqrt((x - x')^T Q (x - x')) / gamma)], Matern 3/2 rho.
double tm_kernel(std::span<const double> x, std::span<const double> xp, const KernelContext& c);

/// Ordering, deltas and nearest predecessors (original indices) up to the hard
/// cap, from which the active conditioning sets are prefixes.
struct TMStructure {
  std::vector<std::size_t> order;
  std::vector<double> delta;  ///< per position; position 0 gets the largest delta
  std::vector<std::vector<std::size_t>> neighbors;
  std::size_t m = 1;          ///< active conditioning size

  std::size_t size() const noexcept { return order.size(); }
  std::size_t active(std::size_t position) const {
    return std::min(m, neighbors[position].size());
  }
};

TMStructure tm_structure(const geo::LocationSet& locs, const geo::MaximinOrdering& ordering,
                         std::size_t hard_cap);

struct Evidence {
  double value = 0.0;
  std::array<double, kHyperCount> grad{};
};

/// Conjugate evidence of column order[position] of Z (N x L, columns in
/// original location order) regressed on its active neighbors.
Evidence location_evidence(const Eigen::MatrixXd& Z, const TMStructure& s, std::size_t position,
                           const TMHyper& h, const TMSettings& settings, bool with_gradient);

/// Sum of location_evidence over all positions; gradient written if non-empty.
double tm_marginal_loglik(const Eigen::MatrixXd& Z, const TMStructure& s, const TMHyper& h,
                          const TMSettings& settings, std::span<double> grad = {});

/// Closed-form posterior of all map components given fixed hyperparameters.
class TMPosterior {
 public:
  TMPosterior() = default;
  TMPosterior(Eigen::MatrixXd Z, TMStructure s, const TMHyper& h, const TMSettings& settings);

  struct Predictive {
    double location = 0.0;
    double scale = 1.0;
    double dof = 1.0;
  };

  std::size_t size() const noexcept { return structure_.size(); }
  const TMHyper& hyper() const noexcept { return hyper_; }
  const TMSettings& settings() const noexcept { return settings_; }
  const TMStructure& structure() const noexcept { return structure_; }
  const Eigen::MatrixXd& training() const noexcept { return Z_; }

  /// Posterior predictive of the component at `position`; only predecessors of
  /// `ztilde` (original indexing) are read.
  Predictive predictive(std::size_t position, std::span<const double> ztilde) const;

  /// Per-position log predictive densities (Student t), in ordering positions.
  std::vector<double> log_density_terms(std::span<const double> ztilde) const;
  double log_density(std::span<const double> ztilde) const;

  /// z_i = Phi^{-1}(F_pred,i(ztilde_i)); original indexing in and out.
  std::vector<double> apply(std::span<const double> ztilde) const;
  /// Sequential inverse of apply.
  std::vector<double> invert(std::span<const double> z) const;

 private:
  struct Component {
    KernelContext ctx;
    Eigen::MatrixXd X;     // N x |c|
    Eigen::MatrixXd chol;  // of K + I
    Eigen::VectorXd w;     // (K + I)^{-1} y
    double alpha_post = 0.0;
    double beta_post = 0.0;
  };

  Eigen::MatrixXd Z_;
  TMStructure structure_;
  TMHyper hyper_;
  TMSettings settings_;
  std::vector<Component> comp_;
};

struct TMFitResult {
  TMPosterior posterior;
  opt::OptimizeResult optimization;
  int passes = 0;
};

/// Empirical Bayes: maximizes tm_marginal_loglik over theta^T, re-solving if
/// the implied conditioning cap moves by more than one.
TMFitResult tm_fit(const Eigen::MatrixXd& Z, TMStructure s, const TMSettings& settings,
                   const opt::OptimizerConfig& config, const TMHyper& start = {},
                   const opt::TraceSink& sink = {});

}  // namespace sct::tm
