#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sct/config.hpp"
#include "sct/geometry.hpp"
#include "sct/marginal.hpp"
#include "sct/onion_spline.hpp"
#include "sct/optimizer.hpp"
#include "sct/priors.hpp"
#include "sct/transport_map.hpp"

namespace sct::est {

/// Plug-in marginal layers H o G at every location.
class MarginalState {
 public:
  MarginalState() = default;
  /// theta: L x P constrained parameters (shared columns repeated);
  /// beta: L x D spline coefficients, ignored unless use_h.
  MarginalState(marginal::FamilyKind family, Eigen::MatrixXd theta, bool use_h,
                onion::KnotGrid knots, const Eigen::MatrixXd& beta);

  marginal::FamilyKind family_kind() const noexcept { return kind_; }
  const marginal::DistributionFamily& family() const { return *family_; }
  bool use_h() const noexcept { return use_h_; }
  const onion::KnotGrid& knots() const noexcept { return knots_; }
  const Eigen::MatrixXd& theta() const noexcept { return theta_; }
  const Eigen::MatrixXd& beta() const noexcept { return beta_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(theta_.rows()); }

  /// ytilde = G(y)
  double g(std::size_t loc, double y, marginal::Saturation* sat = nullptr) const;
  /// ztilde = H(G(y))
  double forward(std::size_t loc, double y, marginal::Saturation* sat = nullptr) const;
  /// log dG/dy + log dH/dytilde at y
  double log_jacobian(std::size_t loc, double y) const;
  double log_jacobian_g(std::size_t loc, double y) const;
  double log_jacobian_h(std::size_t loc, double y) const;
  double inverse(std::size_t loc, double ztilde) const;

  std::vector<double> forward_field(std::span<const double> y, marginal::Saturation* sat = nullptr) const;
  std::vector<double> inverse_field(std::span<const double> ztilde) const;
  /// N x L pseudo-data
  Eigen::MatrixXd forward_matrix(const Eigen::MatrixXd& Y, marginal::Saturation* sat = nullptr) const;

 private:
  std::span<const double> row(std::size_t loc) const;

  marginal::FamilyKind kind_ = marginal::FamilyKind::identity;
  std::shared_ptr<const marginal::DistributionFamily> family_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> theta_rows_;
  Eigen::MatrixXd theta_;
  bool use_h_ = false;
  onion::KnotGrid knots_;
  Eigen::MatrixXd beta_;
  std::vector<onion::OnionCoefficients> coeffs_;
};

/// Offsets of each block in the flat Stage-1 parameter vector.
///
///   [ u_p (M) for each local parameter p ]
///   [ eta_tau_p, eta_ell_p for each local parameter p ]
///   [ shared parameters (eta scale) ]
///   [ U (M x D, column-major), eta_tau_H, eta_ell_H ]   (only with H)
struct Stage1Layout {
  std::size_t M = 0, D = 0, local = 0, shared = 0;
  bool use_h = false;

  std::size_t zeta_u(std::size_t p) const { return p * M; }
  std::size_t zeta_hyper(std::size_t p) const { return local * M + 2 * p; }
  std::size_t shared_at(std::size_t s) const { return local * (M + 2) + s; }
  std::size_t beta_u() const { return local * (M + 2) + shared; }
  std::size_t beta_hyper() const { return beta_u() + M * D; }
  std::size_t size() const { return beta_u() + (use_h ? M * D + 2 : 0); }
};

/// Penalized working-independence log-likelihood of the marginal layers.
class Stage1Problem {
 public:
  Stage1Problem(const geo::LocationSet& locs, const geo::MaximinOrdering& ordering,
                const ModelConfig& config);

  const Stage1Layout& layout() const noexcept { return layout_; }
  const ModelConfig& config() const noexcept { return config_; }
  const priors::InducingGeometry& geometry() const noexcept { return geom_; }
  const marginal::DistributionFamily& family() const { return *family_; }
  const onion::KnotGrid& knots() const noexcept { return knots_; }

  /// Objective on the rows of Y (N x L) plus the whitened log priors; the
  /// gradient is written when `grad` is non-empty.
  double objective(std::span<const double> x, const Eigen::MatrixXd& Y,
                   std::span<double> grad = {}) const;
  /// Log-likelihood only, used for validation.
  double loglik(std::span<const double> x, const Eigen::MatrixXd& Y) const;

  /// Expanded fields at every location.
  MarginalState state(std::span<const double> x) const;

  /// Starting point: moment estimates projected onto the inducing basis,
  /// beta = 0, tau^2 = 1, ell = 10% of the diameter estimate. Locations
  /// with degenerate spread are listed in `flagged`.
  std::vector<double> initialize(const Eigen::MatrixXd& Y, std::vector<std::size_t>* flagged = nullptr) const;

 private:
  struct Fields;
  Fields expand(std::span<const double> x, bool keep_bases) const;
  double evaluate(std::span<const double> x, const Eigen::MatrixXd& Y, std::span<double> grad,
                  bool with_prior) const;

  ModelConfig config_;
  priors::InducingGeometry geom_;
  std::shared_ptr<const marginal::DistributionFamily> family_;
  onion::KnotGrid knots_;
  Stage1Layout layout_;
  double diameter_ = 1.0;
};

struct Stage1Result {
  std::vector<double> x;
  MarginalState state;
  opt::OptimizeResult optimization;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<std::size_t> flagged;
  std::vector<std::size_t> validation_rows;
  double seconds = 0.0;
};

/// Rows held out for early stopping, drawn with the configured seed.
std::vector<std::size_t> validation_split(std::size_t N, double fraction, std::uint64_t seed);

Stage1Result stage1_fit(const Eigen::MatrixXd& Y, const Stage1Problem& problem,
                        const opt::TraceSink& sink = {});

struct Stage2Result {
  tm::TMFitResult fit;
  Eigen::MatrixXd pseudo;
  std::size_t saturated = 0;
  double seconds = 0.0;
};

/// Freezes the marginal layers, maps Y to pseudo-data and fits the map.
Stage2Result stage2_fit(const Eigen::MatrixXd& Y, const MarginalState& state,
                        const geo::LocationSet& locs, const geo::MaximinOrdering& ordering,
                        const ModelConfig& config, const opt::TraceSink& sink = {});

}  // namespace sct::est
