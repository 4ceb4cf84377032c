#include "sct/estimation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "sct/errors.hpp"

namespace sct::est {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& Y, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), Y.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = Y.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// MarginalState

MarginalState::MarginalState(marginal::FamilyKind family, Eigen::MatrixXd theta, bool use_h,
                             onion::KnotGrid knots, const Eigen::MatrixXd& beta)
    : kind_(family), family_(marginal::make_family(family)), theta_(std::move(theta)),
      use_h_(use_h), knots_(knots) {
  if (static_cast<std::size_t>(theta_.cols()) != family_->param_count()) {
    throw DomainError("parameter field width does not match the family");
  }
  theta_rows_ = theta_;
  for (Eigen::Index l = 0; l < theta_.rows(); ++l) family_->validate(row(static_cast<std::size_t>(l)));
  if (use_h_) {
    if (beta.rows() != theta_.rows() || beta.cols() != knots_.free_count()) {
      throw DomainError("spline coefficient field has the wrong shape");
    }
    beta_ = beta;
    coeffs_.reserve(static_cast<std::size_t>(beta.rows()));
    std::vector<double> b(static_cast<std::size_t>(beta.cols()));
    for (Eigen::Index l = 0; l < beta.rows(); ++l) {
      for (Eigen::Index d = 0; d < beta.cols(); ++d) b[static_cast<std::size_t>(d)] = beta(l, d);
      coeffs_.emplace_back(knots_, b);
    }
  }
}

std::span<const double> MarginalState::row(std::size_t loc) const {
  return {theta_rows_.data() + loc * static_cast<std::size_t>(theta_rows_.cols()),
          static_cast<std::size_t>(theta_rows_.cols())};
}

double MarginalState::g(std::size_t loc, double y, marginal::Saturation* sat) const {
  const auto e = family_->evaluate(y, row(loc), false);
  if (e.saturated && sat) ++sat->count;
  return e.ytilde;
}

double MarginalState::forward(std::size_t loc, double y, marginal::Saturation* sat) const {
  const double yt = g(loc, y, sat);
  return use_h_ ? onion::h_forward(yt, coeffs_[loc], knots_) : yt;
}

double MarginalState::log_jacobian_g(std::size_t loc, double y) const {
  return family_->evaluate(y, row(loc), false).log_slope;
}

double MarginalState::log_jacobian_h(std::size_t loc, double y) const {
  if (!use_h_) return 0.0;
  return std::log(onion::h_derivative(g(loc, y), coeffs_[loc], knots_));
}

double MarginalState::log_jacobian(std::size_t loc, double y) const {
  const auto e = family_->evaluate(y, row(loc), false);
  double s = e.log_slope;
  if (use_h_) s += std::log(onion::h_derivative(e.ytilde, coeffs_[loc], knots_));
  return s;
}

double MarginalState::inverse(std::size_t loc, double ztilde) const {
  const double yt = use_h_ ? onion::h_inverse(ztilde, coeffs_[loc], knots_) : ztilde;
  return marginal::g_inverse(yt, row(loc), *family_);
}

std::vector<double> MarginalState::forward_field(std::span<const double> y,
                                                 marginal::Saturation* sat) const {
  if (y.size() != size()) throw DomainError("field length does not match the model");
  std::vector<double> out(y.size());
  for (std::size_t l = 0; l < y.size(); ++l) out[l] = forward(l, y[l], sat);
  return out;
}

std::vector<double> MarginalState::inverse_field(std::span<const double> ztilde) const {
  if (ztilde.size() != size()) throw DomainError("field length does not match the model");
  std::vector<double> out(ztilde.size());
  for (std::size_t l = 0; l < ztilde.size(); ++l) out[l] = inverse(l, ztilde[l]);
  return out;
}

Eigen::MatrixXd MarginalState::forward_matrix(const Eigen::MatrixXd& Y,
                                              marginal::Saturation* sat) const {
  if (static_cast<std::size_t>(Y.cols()) != size()) {
    throw DomainError("data width does not match the model");
  }
  Eigen::MatrixXd Z(Y.rows(), Y.cols());
  for (Eigen::Index l = 0; l < Y.cols(); ++l) {
    for (Eigen::Index j = 0; j < Y.rows(); ++j) Z(j, l) = forward(static_cast<std::size_t>(l), Y(j, l), sat);
  }
  return Z;
}

// ---------------------------------------------------------------------------
// Stage 1

struct Stage1Problem::Fields {
  std::vector<priors::LowRankBasis> zeta_basis;
  std::vector<double> tau_z, ell_z;
  Eigen::MatrixXd eta;     // L x P
  Eigen::MatrixXd theta;   // L x P
  Eigen::MatrixXd dtheta;  // L x P, d theta / d eta
  std::optional<priors::LowRankBasis> beta_basis;
  double tau_b = 1.0, ell_b = 1.0;
  Eigen::MatrixXd U;       // M x D
  Eigen::MatrixXd beta;    // L x D
};

Stage1Problem::Stage1Problem(const geo::LocationSet& locs, const geo::MaximinOrdering& ordering,
                             const ModelConfig& config)
    : config_(config), family_(marginal::make_family(config.family)) {
  config_.validate();
  const std::size_t L = locs.size();
  const std::size_t M = std::min(config_.M, L);
  geom_ = priors::InducingGeometry(locs, priors::make_inducing(ordering, M));
  if (config_.use_h) knots_ = onion::KnotGrid(config_.a, config_.b, config_.D);
  layout_.M = M;
  layout_.D = config_.use_h ? static_cast<std::size_t>(config_.D) : 0;
  layout_.local = family_->local_count();
  layout_.shared = family_->shared_count();
  layout_.use_h = config_.use_h;
  diameter_ = locs.diameter_estimate(ordering.order.front());
  if (!(diameter_ > 0.0)) diameter_ = 1.0;
}

Stage1Problem::Fields Stage1Problem::expand(std::span<const double> x, bool) const {
  if (x.size() != layout_.size()) throw DomainError("Stage-1 parameter vector has the wrong length");
  const std::size_t L = geom_.location_count(), M = layout_.M;
  const auto ps = family_->params();
  const std::size_t P = ps.size();
  Fields F;
  F.eta.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(P));
  std::size_t lp = 0, sp = 0;
  for (std::size_t p = 0; p < P; ++p) {
    if (ps[p].shared) {
      F.eta.col(static_cast<Eigen::Index>(p)).setConstant(x[layout_.shared_at(sp++)]);
      continue;
    }
    const std::size_t h = layout_.zeta_hyper(lp);
    const double tau = std::sqrt(marginal::softplus(x[h]));
    const double ell = marginal::softplus(x[h + 1]);
    F.zeta_basis.emplace_back(geom_, config_.kernel_zeta, ell);
    F.tau_z.push_back(tau);
    F.ell_z.push_back(ell);
    const Eigen::Map<const Eigen::MatrixXd> u(x.data() + layout_.zeta_u(lp), static_cast<Eigen::Index>(M), 1);
    F.eta.col(static_cast<Eigen::Index>(p)) = F.zeta_basis.back().expand(u, tau, false);
    ++lp;
  }
  F.theta.resize(F.eta.rows(), F.eta.cols());
  F.dtheta.resize(F.eta.rows(), F.eta.cols());
  for (std::size_t p = 0; p < P; ++p) {
    const bool soft = ps[p].link == marginal::Link::softplus;
    for (std::size_t l = 0; l < L; ++l) {
      const double e = F.eta(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p));
      F.theta(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p)) = soft ? marginal::softplus(e) : e;
      F.dtheta(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p)) = soft ? marginal::sigmoid(e) : 1.0;
    }
  }
  if (layout_.use_h) {
    const std::size_t h = layout_.beta_hyper();
    F.tau_b = std::sqrt(marginal::softplus(x[h]));
    F.ell_b = marginal::softplus(x[h + 1]);
    F.beta_basis.emplace(geom_, config_.kernel_beta, F.ell_b);
    F.U = Eigen::Map<const Eigen::MatrixXd>(x.data() + layout_.beta_u(), static_cast<Eigen::Index>(M),
                                            static_cast<Eigen::Index>(layout_.D));
    F.beta = F.beta_basis->expand(F.U, F.tau_b, true);
  }
  return F;
}

double Stage1Problem::evaluate(std::span<const double> x, const Eigen::MatrixXd& Y,
                               std::span<double> grad, bool with_prior) const {
  const std::size_t L = geom_.location_count();
  if (static_cast<std::size_t>(Y.cols()) != L) throw DomainError("data width does not match the locations");
  const Fields F = expand(x, !grad.empty());
  const bool with_grad = !grad.empty();
  const auto ps = family_->params();
  const std::size_t P = ps.size();
  const Eigen::Index N = Y.rows();

  Eigen::MatrixXd Gz = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(P));
  Eigen::MatrixXd Gb;
  std::optional<onion::BetaGradient> bg;
  if (layout_.use_h) {
    Gb.setZero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(layout_.D));
    bg.emplace(knots_);
  }

  std::vector<double> th(P), bl(layout_.D), gb(layout_.D);
  double value = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const Eigen::Index li = static_cast<Eigen::Index>(l);
    for (std::size_t p = 0; p < P; ++p) th[p] = F.theta(li, static_cast<Eigen::Index>(p));
    for (std::size_t p = 0; p < P; ++p) {
      if (!(ps[p].link != marginal::Link::softplus || th[p] > 0.0)) {
        std::ostringstream os;
        os << "parameter " << ps[p].name << " underflowed at location " << l;
        throw NumericalError(os.str());
      }
    }
    std::optional<onion::OnionCoefficients> coeffs;
    if (layout_.use_h) {
      for (std::size_t d = 0; d < layout_.D; ++d) bl[d] = F.beta(li, static_cast<Eigen::Index>(d));
      coeffs.emplace(knots_, bl);
      bg->reset();
    }
    double loc_sum = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      const marginal::GEval ge = family_->evaluate(Y(j, li), th, with_grad);
      onion::PointEval pe;
      if (coeffs) {
        pe = onion::evaluate(ge.ytilde, *coeffs, knots_);
      } else {
        pe.value = ge.ytilde;
      }
      const double zt = pe.value;
      loc_sum += -0.5 * zt * zt - kHalfLog2Pi + std::log(pe.slope) + ge.log_slope;
      if (!with_grad) continue;
      const double dy = -zt * pe.slope + pe.curve / pe.slope;
      for (std::size_t p = 0; p < P; ++p) {
        Gz(li, static_cast<Eigen::Index>(p)) += dy * ge.d_ytilde[p] + ge.d_log_slope[p];
      }
      if (bg) bg->add(pe, -zt, 1.0 / pe.slope);
    }
    if (!std::isfinite(loc_sum)) {
      std::ostringstream os;
      os << "non-finite log-likelihood at location " << l;
      throw NumericalError(os.str());
    }
    value += loc_sum;
    if (with_grad && bg) {
      bg->finish(*coeffs, gb);
      for (std::size_t d = 0; d < layout_.D; ++d) Gb(li, static_cast<Eigen::Index>(d)) = gb[d];
    }
  }

  if (with_prior) {
    const std::size_t nprior_z = layout_.local * layout_.M;
    value += priors::whitened_logprior(x.subspan(0, nprior_z));
    if (layout_.use_h) value += priors::whitened_logprior(x.subspan(layout_.beta_u(), layout_.M * layout_.D));
  }
  if (!with_grad) return value;

  std::fill(grad.begin(), grad.end(), 0.0);
  const Eigen::Index M = static_cast<Eigen::Index>(layout_.M);
  std::size_t lp = 0, sp = 0;
  for (std::size_t p = 0; p < P; ++p) {
    const Eigen::VectorXd g_eta = Gz.col(static_cast<Eigen::Index>(p)).cwiseProduct(F.dtheta.col(static_cast<Eigen::Index>(p)));
    if (ps[p].shared) {
      grad[layout_.shared_at(sp++)] = g_eta.sum();
      continue;
    }
    const Eigen::Map<const Eigen::MatrixXd> u(x.data() + layout_.zeta_u(lp), M, 1);
    Eigen::MatrixXd du;
    double dtau = 0.0, dell = 0.0;
    F.zeta_basis[lp].backprop(u, F.tau_z[lp], false, g_eta, du, dtau, &dell);
    for (Eigen::Index m = 0; m < M; ++m) grad[layout_.zeta_u(lp) + static_cast<std::size_t>(m)] = du(m, 0);
    const std::size_t h = layout_.zeta_hyper(lp);
    grad[h] = dtau * marginal::sigmoid(x[h]) / (2.0 * F.tau_z[lp]);
    grad[h + 1] = dell * marginal::sigmoid(x[h + 1]);
    ++lp;
  }
  if (layout_.use_h) {
    Eigen::MatrixXd dU;
    double dtau = 0.0, dell = 0.0;
    F.beta_basis->backprop(F.U, F.tau_b, true, Gb, dU, dtau, &dell);
    std::copy(dU.data(), dU.data() + dU.size(), grad.begin() + static_cast<std::ptrdiff_t>(layout_.beta_u()));
    const std::size_t h = layout_.beta_hyper();
    grad[h] = dtau * marginal::sigmoid(x[h]) / (2.0 * F.tau_b);
    grad[h + 1] = dell * marginal::sigmoid(x[h + 1]);
  }
  if (with_prior) {
    for (std::size_t i = 0; i < layout_.local * layout_.M; ++i) grad[i] -= x[i];
    if (layout_.use_h) {
      for (std::size_t i = layout_.beta_u(); i < layout_.beta_hyper(); ++i) grad[i] -= x[i];
    }
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      std::ostringstream os;
      os << "non-finite gradient component " << i;
      throw NumericalError(os.str());
    }
  }
  return value;
}

double Stage1Problem::objective(std::span<const double> x, const Eigen::MatrixXd& Y,
                                std::span<double> grad) const {
  return evaluate(x, Y, grad, true);
}

double Stage1Problem::loglik(std::span<const double> x, const Eigen::MatrixXd& Y) const {
  return evaluate(x, Y, {}, false);
}

MarginalState Stage1Problem::state(std::span<const double> x) const {
  const Fields F = expand(x, false);
  return MarginalState(config_.family, F.theta, layout_.use_h, knots_,
                       layout_.use_h ? F.beta : Eigen::MatrixXd());
}

std::vector<double> Stage1Problem::initialize(const Eigen::MatrixXd& Y,
                                              std::vector<std::size_t>* flagged) const {
  const std::size_t L = geom_.location_count();
  if (Y.rows() < 2) throw DomainError("initialization needs at least two replicates");
  std::vector<double> x(layout_.size(), 0.0);
  const auto ps = family_->params();
  const std::size_t P = ps.size();

  const double global_sd = std::sqrt((Y.array() - Y.mean()).square().sum() / static_cast<double>(Y.size() - 1));
  const double floor = 1e-6 * (global_sd > 0.0 ? global_sd : 1.0);
  Eigen::MatrixXd eta0(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(P));
  std::vector<double> th(P), et(P);
  for (std::size_t l = 0; l < L; ++l) {
    const auto col = Y.col(static_cast<Eigen::Index>(l));
    const double mean = col.mean();
    double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(Y.rows() - 1));
    if (!(sd > floor)) {
      sd = floor;
      if (flagged) flagged->push_back(l);
    }
    const auto mom = family_->moment_estimates(mean, sd);
    std::copy(mom.begin(), mom.end(), th.begin());
    marginal::invert_links(*family_, th, et);
    for (std::size_t p = 0; p < P; ++p) eta0(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p)) = et[p];
  }

  const double eta_tau = marginal::softplus_inverse(1.0);
  const double eta_ell = marginal::softplus_inverse(0.1 * diameter_);
  std::size_t lp = 0, sp = 0;
  for (std::size_t p = 0; p < P; ++p) {
    if (ps[p].shared) {
      x[layout_.shared_at(sp++)] = eta0.col(static_cast<Eigen::Index>(p)).mean();
      continue;
    }
    const std::size_t h = layout_.zeta_hyper(lp);
    x[h] = eta_tau;
    x[h + 1] = eta_ell;
    const priors::LowRankBasis basis(geom_, config_.kernel_zeta, marginal::softplus(eta_ell));
    // B = R_Lu Lc^{-T}; least-squares fit of tau B u to the moment field (tau = 1)
    Eigen::MatrixXd Bt = basis.r_lu().transpose();
    basis.chol().triangularView<Eigen::Lower>().solveInPlace(Bt);
    const Eigen::VectorXd u = Bt.transpose().colPivHouseholderQr().solve(eta0.col(static_cast<Eigen::Index>(p)));
    std::copy(u.data(), u.data() + u.size(), x.begin() + static_cast<std::ptrdiff_t>(layout_.zeta_u(lp)));
    ++lp;
  }
  if (layout_.use_h) {
    x[layout_.beta_hyper()] = eta_tau;
    x[layout_.beta_hyper() + 1] = eta_ell;
  }
  return x;
}

std::vector<std::size_t> validation_split(std::size_t N, double fraction, std::uint64_t seed) {
  std::size_t n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(N) + 0.5));
  if (N < 2 + n_val) n_val = N > 2 ? N - 2 : 0;
  if (n_val == 0) return {};
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n_val);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Stage1Result stage1_fit(const Eigen::MatrixXd& Y, const Stage1Problem& problem,
                        const opt::TraceSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& cfg = problem.config();
  if (Y.rows() < 2) throw DomainError("stage 1 needs N >= 2 replicates");
  if (!Y.allFinite()) throw DomainError("ensemble contains non-finite values");

  Stage1Result res;
  if (cfg.optimizer.patience > 0) {
    res.validation_rows = validation_split(static_cast<std::size_t>(Y.rows()), cfg.validation_fraction,
                                           cfg.optimizer.seed);
  }
  std::vector<std::size_t> train;
  for (std::size_t r = 0; r < static_cast<std::size_t>(Y.rows()); ++r) {
    if (!std::binary_search(res.validation_rows.begin(), res.validation_rows.end(), r)) train.push_back(r);
  }
  const Eigen::MatrixXd Yt = select_rows(Y, train);
  const Eigen::MatrixXd Yv = select_rows(Y, res.validation_rows);

  std::vector<double> x0 = problem.initialize(Yt, &res.flagged);
  {
    std::vector<double> g(x0.size());
    try {
      res.initial_objective = problem.objective(x0, Yt, g);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("initialization: ") + e.what());
    }
    if (!std::isfinite(res.initial_objective)) throw NumericalError("initialization: non-finite objective");
  }

  const opt::Objective f = [&](std::span<const double> x, std::span<double> g) {
    return problem.objective(x, Yt, g);
  };
  const opt::Validation v = [&](std::span<const double> x) { return problem.loglik(x, Yv); };
  const opt::Validation* vp = res.validation_rows.empty() ? nullptr : &v;
  res.optimization = opt::maximize(f, x0, cfg.optimizer, vp, sink);
  res.x = res.optimization.x.empty() ? x0 : res.optimization.x;
  res.final_objective = res.optimization.x.empty() ? res.initial_objective : res.optimization.objective;
  if (res.final_objective < res.initial_objective) {
    res.x = x0;
    res.final_objective = res.initial_objective;
  }
  res.state = problem.state(res.x);
  res.seconds = seconds_since(t0);
  return res;
}

Stage2Result stage2_fit(const Eigen::MatrixXd& Y, const MarginalState& state,
                        const geo::LocationSet& locs, const geo::MaximinOrdering& ordering,
                        const ModelConfig& config, const opt::TraceSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  Stage2Result res;
  marginal::Saturation sat;
  res.pseudo = state.forward_matrix(Y, &sat);
  res.saturated = sat.count;
  tm::TMSettings settings;
  settings.g = config.g;
  settings.epsilon = config.epsilon;
  settings.max_conditioning = config.max_conditioning;
  tm::TMStructure s = tm::tm_structure(locs, ordering, config.max_conditioning);
  res.fit = tm::tm_fit(res.pseudo, std::move(s), settings, config.tm_optimizer, {}, sink);
  res.seconds = seconds_since(t0);
  return res;
}

}  // namespace sct::est
