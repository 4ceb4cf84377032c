#include "sct/transport_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "sct/errors.hpp"
#include "sct/marginal.hpp"

namespace sct::tm {

namespace {

using Pol = boost::math::policies::policy<
    boost::math::policies::domain_error<boost::math::policies::errno_on_error>,
    boost::math::policies::overflow_error<boost::math::policies::errno_on_error>,
    boost::math::policies::evaluation_error<boost::math::policies::errno_on_error>,
    boost::math::policies::promote_double<false>>;
using StudentT = boost::math::students_t_distribution<double, Pol>;

constexpr double kLog2Pi = 1.83787706640934548356;
const double kSqrt3 = std::sqrt(3.0);

double t_logpdf(double x, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - 0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

// Phi^{-1}(F_t(x)) through whichever tail is small.
double t_to_normal(double x, double nu) {
  const StudentT t(nu);
  if (x <= 0.0) {
    return marginal::norm_quantile(std::max(boost::math::cdf(t, x), std::numeric_limits<double>::min()));
  }
  return marginal::norm_quantile_upper(
      std::max(boost::math::cdf(boost::math::complement(t, x)), std::numeric_limits<double>::min()));
}

double normal_to_t(double z, double nu) {
  const StudentT t(nu);
  if (z <= 0.0) return boost::math::quantile(t, marginal::norm_cdf(z));
  return boost::math::quantile(boost::math::complement(t, marginal::norm_cdf(-z)));
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& Z, const std::vector<std::size_t>& cols, std::size_t k) {
  Eigen::MatrixXd X(Z.rows(), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) X.col(static_cast<Eigen::Index>(j)) = Z.col(static_cast<Eigen::Index>(cols[j]));
  return X;
}

Eigen::MatrixXd kernel_gram(const Eigen::MatrixXd& X, const KernelContext& c) {
  const Eigen::Index N = X.rows();
  Eigen::MatrixXd K(N, N);
  std::vector<double> a(static_cast<std::size_t>(X.cols())), b(a.size());
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      for (std::size_t d = 0; d < a.size(); ++d) {
        a[d] = X(i, static_cast<Eigen::Index>(d));
        b[d] = X(j, static_cast<Eigen::Index>(d));
      }
      K(i, j) = K(j, i) = tm_kernel(a, b, c);
    }
  }
  return K;
}

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& G, std::size_t position) {
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "transport map Gram factorization failed at ordering position " << position;
    throw ConditioningError(os.str());
  }
  return llt;
}

}  // namespace

PriorQuantities prior_quantities(double delta, const TMHyper& h, double g) {
  if (!(delta > 0.0)) throw DomainError("prior_quantities needs delta > 0");
  if (!(g > 0.0)) throw DomainError("prior_quantities needs g > 0");
  const double ld = std::log(delta);
  PriorQuantities p;
  p.alpha = 2.0 + 1.0 / (g * g);
  p.expected_d2 = std::exp(h.theta[kD1] + std::exp(h.theta[kD2]) * ld);
  p.beta = p.expected_d2 * (p.alpha - 1.0);
  p.sigma2 = std::exp(h.theta[kSigma1] + std::exp(h.theta[kSigma2]) * ld);
  return p;
}

std::size_t conditioning_cap(double theta_q, double epsilon, std::size_t hard_cap) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("conditioning_cap needs epsilon in (0, 1)");
  const double rate = std::exp(theta_q);
  const double limit = -std::log(epsilon) / rate;
  if (!(limit < static_cast<double>(hard_cap))) return std::max<std::size_t>(1, hard_cap);
  auto ok = [&](double j) { return std::exp(-j * rate) >= epsilon; };
  double j = std::floor(limit);
  while (j >= 1.0 && !ok(j)) j -= 1.0;
  while (ok(j + 1.0) && j + 1.0 <= static_cast<double>(hard_cap)) j += 1.0;
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(j, 1.0)), 1, std::max<std::size_t>(1, hard_cap));
}

KernelContext kernel_context(std::size_t n_neighbors, double delta, const TMHyper& h,
                             const TMSettings& s) {
  const PriorQuantities pq = prior_quantities(delta, h, s.g);
  KernelContext c;
  c.q.resize(n_neighbors);
  const double rate = std::exp(h.theta[kQ]);
  for (std::size_t j = 0; j < n_neighbors; ++j) c.q[j] = std::exp(-static_cast<double>(j + 1) * rate);
  c.sigma2 = s.linear ? 0.0 : pq.sigma2;
  c.expected_d2 = pq.expected_d2;
  c.gamma = std::exp(h.theta[kGamma]);
  return c;
}

double tm_kernel(std::span<const double> x, std::span<const double> xp, const KernelContext& c) {
  double lin = 0.0, s2 = 0.0;
  for (std::size_t j = 0; j < c.q.size(); ++j) {
    lin += c.q[j] * x[j] * xp[j];
    const double d = x[j] - xp[j];
    s2 += c.q[j] * d * d;
  }
  const double u = std::sqrt(s2) / c.gamma;
  const double rho = (1.0 + kSqrt3 * u) * std::exp(-kSqrt3 * u);
  return (lin + c.sigma2 * rho) / c.expected_d2;
}

TMStructure tm_structure(const geo::LocationSet& locs, const geo::MaximinOrdering& ordering,
                         std::size_t hard_cap) {
  const std::size_t L = ordering.size();
  if (L != locs.size()) throw DomainError("ordering does not match the location set");
  TMStructure s;
  s.order = ordering.order;
  s.delta.resize(L);
  double dmax = 1.0;
  if (L > 1) dmax = *std::max_element(ordering.min_dists.begin(), ordering.min_dists.end());
  s.delta[0] = dmax;
  for (std::size_t p = 1; p < L; ++p) s.delta[p] = ordering.delta(p);
  s.neighbors.resize(L);
  for (std::size_t p = 0; p < L; ++p) {
    const auto pos = geo::nearest_predecessors(ordering, locs, p, hard_cap);
    s.neighbors[p].reserve(pos.size());
    for (std::size_t q : pos) s.neighbors[p].push_back(ordering.order[q]);
  }
  s.m = std::max<std::size_t>(1, std::min<std::size_t>(hard_cap, conditioning_cap(0.0, 0.01, hard_cap)));
  return s;
}

Evidence location_evidence(const Eigen::MatrixXd& Z, const TMStructure& s, std::size_t position,
                           const TMHyper& h, const TMSettings& settings, bool with_gradient) {
  const Eigen::Index N = Z.rows();
  const std::size_t k = s.active(position);
  const double delta = s.delta[position];
  const PriorQuantities pq = prior_quantities(delta, h, settings.g);
  const KernelContext c = kernel_context(k, delta, h, settings);
  const Eigen::VectorXd y = Z.col(static_cast<Eigen::Index>(s.order[position]));
  const Eigen::MatrixXd X = gather(Z, s.neighbors[position], k);

  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(N, N);
  if (k > 0) G += kernel_gram(X, c);
  const auto llt = factor(G, position);
  const Eigen::VectorXd w = llt.solve(y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double a_post = pq.alpha + 0.5 * static_cast<double>(N);
  const double b_post = pq.beta + 0.5 * y.dot(w);

  Evidence ev;
  ev.value = -0.5 * logdet + pq.alpha * std::log(pq.beta) - std::lgamma(pq.alpha) +
             std::lgamma(a_post) - a_post * std::log(b_post) - 0.5 * static_cast<double>(N) * kLog2Pi;
  if (!with_gradient) return ev;

  const double ld = std::log(delta);
  const double ed2 = std::exp(h.theta[kD2]) * ld;
  const double es2 = std::exp(h.theta[kSigma2]) * ld;
  const double rate = std::exp(h.theta[kQ]);

  // d log p = -1/2 tr(G^{-1} dK) + 1/2 a_post w^T dK w / b_post + beta terms
  std::array<double, kHyperCount> tr{}, quad{};
  if (k > 0) {
    const Eigen::MatrixXd Ginv = llt.solve(Eigen::MatrixXd::Identity(N, N));
    std::vector<double> dq(k);
    for (std::size_t j = 0; j < k; ++j) dq[j] = -static_cast<double>(j + 1) * rate * c.q[j];
    const double E = c.expected_d2, s2v = c.sigma2, gam = c.gamma;
    for (Eigen::Index a = 0; a < N; ++a) {
      for (Eigen::Index b = 0; b <= a; ++b) {
        double lin = 0.0, sq = 0.0, dlin = 0.0, dsq = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const Eigen::Index jj = static_cast<Eigen::Index>(j);
          const double xa = X(a, jj), xb = X(b, jj), d = xa - xb;
          lin += c.q[j] * xa * xb;
          sq += c.q[j] * d * d;
          dlin += dq[j] * xa * xb;
          dsq += dq[j] * d * d;
        }
        const double u = std::sqrt(sq) / gam;
        const double e = std::exp(-kSqrt3 * u);
        const double rho = (1.0 + kSqrt3 * u) * e;
        const double K = (lin + s2v * rho) / E;
        std::array<double, kHyperCount> dK;
        dK[kD1] = -K;
        dK[kD2] = -K * ed2;
        dK[kSigma1] = s2v * rho / E;
        dK[kSigma2] = s2v * rho * es2 / E;
        dK[kGamma] = 3.0 * s2v * u * u * e / E;
        dK[kQ] = (dlin - s2v * 3.0 * e / (2.0 * gam * gam) * dsq) / E;
        const double mult = a == b ? 1.0 : 2.0;
        const double gi = mult * Ginv(a, b), ww = mult * w(a) * w(b);
        for (std::size_t t = 0; t < kHyperCount; ++t) {
          tr[t] += gi * dK[t];
          quad[t] += ww * dK[t];
        }
      }
    }
  }
  for (std::size_t t = 0; t < kHyperCount; ++t) {
    ev.grad[t] = -0.5 * tr[t] + 0.5 * a_post * quad[t] / b_post;
  }
  const double dbeta_d1 = pq.beta, dbeta_d2 = pq.beta * ed2;
  ev.grad[kD1] += pq.alpha * dbeta_d1 / pq.beta - a_post * dbeta_d1 / b_post;
  ev.grad[kD2] += pq.alpha * dbeta_d2 / pq.beta - a_post * dbeta_d2 / b_post;
  return ev;
}

double tm_marginal_loglik(const Eigen::MatrixXd& Z, const TMStructure& s, const TMHyper& h,
                          const TMSettings& settings, std::span<double> grad) {
  if (static_cast<std::size_t>(Z.cols()) != s.size()) {
    throw DomainError("pseudo-data column count does not match the ordering");
  }
  if (!Z.allFinite()) throw DomainError("pseudo-data must be finite");
  const bool with_grad = !grad.empty();
  if (with_grad) std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t p = 0; p < s.size(); ++p) {
    const Evidence ev = location_evidence(Z, s, p, h, settings, with_grad);
    total += ev.value;
    if (with_grad) {
      for (std::size_t t = 0; t < kHyperCount; ++t) grad[t] += ev.grad[t];
    }
  }
  return total;
}

TMPosterior::TMPosterior(Eigen::MatrixXd Z, TMStructure s, const TMHyper& h,
                         const TMSettings& settings)
    : Z_(std::move(Z)), structure_(std::move(s)), hyper_(h), settings_(settings) {
  const Eigen::Index N = Z_.rows();
  if (N < 1) throw DomainError("transport map needs at least one training row");
  comp_.resize(structure_.size());
  for (std::size_t p = 0; p < structure_.size(); ++p) {
    Component& c = comp_[p];
    const std::size_t k = structure_.active(p);
    const PriorQuantities pq = prior_quantities(structure_.delta[p], h, settings_.g);
    c.ctx = kernel_context(k, structure_.delta[p], h, settings_);
    c.X = gather(Z_, structure_.neighbors[p], k);
    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(N, N);
    if (k > 0) G += kernel_gram(c.X, c.ctx);
    const auto llt = factor(G, p);
    c.chol = llt.matrixL();
    const Eigen::VectorXd y = Z_.col(static_cast<Eigen::Index>(structure_.order[p]));
    c.w = llt.solve(y);
    c.alpha_post = pq.alpha + 0.5 * static_cast<double>(N);
    c.beta_post = pq.beta + 0.5 * y.dot(c.w);
  }
}

TMPosterior::Predictive TMPosterior::predictive(std::size_t position,
                                                std::span<const double> ztilde) const {
  const Component& c = comp_[position];
  const std::size_t k = static_cast<std::size_t>(c.X.cols());
  Predictive out;
  out.dof = 2.0 * c.alpha_post;
  double var = 1.0;
  if (k > 0) {
    const auto& nb = structure_.neighbors[position];
    std::vector<double> xs(k), xa(k);
    for (std::size_t j = 0; j < k; ++j) xs[j] = ztilde[nb[j]];
    const Eigen::Index N = c.X.rows();
    Eigen::VectorXd ks(N);
    for (Eigen::Index a = 0; a < N; ++a) {
      for (std::size_t j = 0; j < k; ++j) xa[j] = c.X(a, static_cast<Eigen::Index>(j));
      ks(a) = tm_kernel(xs, xa, c.ctx);
    }
    out.location = ks.dot(c.w);
    c.chol.triangularView<Eigen::Lower>().solveInPlace(ks);
    var = 1.0 + tm_kernel(xs, xs, c.ctx) - ks.squaredNorm();
    var = std::max(var, 1.0);
  }
  out.scale = std::sqrt(c.beta_post / c.alpha_post * var);
  return out;
}

std::vector<double> TMPosterior::log_density_terms(std::span<const double> ztilde) const {
  if (ztilde.size() != size()) throw DomainError("field length does not match the map");
  std::vector<double> out(size());
  for (std::size_t p = 0; p < size(); ++p) {
    const Predictive pr = predictive(p, ztilde);
    const double x = (ztilde[structure_.order[p]] - pr.location) / pr.scale;
    out[p] = t_logpdf(x, pr.dof) - std::log(pr.scale);
  }
  return out;
}

double TMPosterior::log_density(std::span<const double> ztilde) const {
  double s = 0.0;
  for (double v : log_density_terms(ztilde)) s += v;
  return s;
}

std::vector<double> TMPosterior::apply(std::span<const double> ztilde) const {
  if (ztilde.size() != size()) throw DomainError("field length does not match the map");
  std::vector<double> z(size());
  for (std::size_t p = 0; p < size(); ++p) {
    const Predictive pr = predictive(p, ztilde);
    const std::size_t i = structure_.order[p];
    z[i] = t_to_normal((ztilde[i] - pr.location) / pr.scale, pr.dof);
  }
  return z;
}

std::vector<double> TMPosterior::invert(std::span<const double> z) const {
  if (z.size() != size()) throw DomainError("field length does not match the map");
  std::vector<double> zt(size(), 0.0);
  for (std::size_t p = 0; p < size(); ++p) {
    const Predictive pr = predictive(p, zt);
    const std::size_t i = structure_.order[p];
    zt[i] = pr.location + pr.scale * normal_to_t(z[i], pr.dof);
  }
  return zt;
}

TMFitResult tm_fit(const Eigen::MatrixXd& Z, TMStructure s, const TMSettings& settings,
                   const opt::OptimizerConfig& config, const TMHyper& start,
                   const opt::TraceSink& sink) {
  if (Z.rows() < 2) throw DomainError("tm_fit needs N >= 2 training rows");
  TMHyper h = start;
  TMFitResult out;
  s.m = conditioning_cap(h.theta[kQ], settings.epsilon, settings.max_conditioning);
  for (int pass = 1; pass <= 3; ++pass) {
    out.passes = pass;
    const opt::Objective f = [&](std::span<const double> x, std::span<double> g) {
      TMHyper hh;
      std::copy(x.begin(), x.end(), hh.theta.begin());
      return tm_marginal_loglik(Z, s, hh, settings, g);
    };
    std::vector<double> x0(h.theta.begin(), h.theta.end());
    out.optimization = opt::maximize(f, std::move(x0), config, nullptr, sink);
    std::copy(out.optimization.x.begin(), out.optimization.x.end(), h.theta.begin());
    const std::size_t m_new = conditioning_cap(h.theta[kQ], settings.epsilon, settings.max_conditioning);
    const std::size_t diff = m_new > s.m ? m_new - s.m : s.m - m_new;
    if (diff <= 1) break;
    s.m = m_new;
  }
  out.posterior = TMPosterior(Z, std::move(s), h, settings);
  return out;
}

}  // namespace sct::tm
