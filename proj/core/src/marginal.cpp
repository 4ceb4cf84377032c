#include "sct/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "sct/errors.hpp"

namespace sct::marginal {

namespace {

using Pol = boost::math::policies::policy<
    boost::math::policies::domain_error<boost::math::policies::errno_on_error>,
    boost::math::policies::overflow_error<boost::math::policies::errno_on_error>,
    boost::math::policies::evaluation_error<boost::math::policies::errno_on_error>,
    boost::math::policies::promote_double<false>>;
using StudentT = boost::math::students_t_distribution<double, Pol>;

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kTiny = std::numeric_limits<double>::min();

// Lower and upper tail of the Student-t CDF.
Tails t_tails(double x, double nu) {
  const StudentT t(nu);
  if (x <= 0.0) {
    const double lo = boost::math::cdf(t, x);
    return {lo, 1.0 - lo};
  }
  const double up = boost::math::cdf(boost::math::complement(t, x));
  return {1.0 - up, up};
}

double t_logpdf(double x, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - 0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

// d/d nu of the Student-t CDF at x, five-point stencil on whichever tail is small.
double t_cdf_dnu(double x, double nu) {
  const double h = 1e-3 * nu;
  auto tail = [&](double n) {
    const StudentT t(n);
    return x <= 0.0 ? boost::math::cdf(t, x) : boost::math::cdf(boost::math::complement(t, x));
  };
  const double d = (-tail(nu + 2 * h) + 8 * tail(nu + h) - 8 * tail(nu - h) + tail(nu - 2 * h)) /
                   (12 * h);
  return x <= 0.0 ? d : -d;
}

const ParamSpec kIdentityParams[] = {{"", Link::identity, false}};
const ParamSpec kGaussianParams[] = {
    {"mu", Link::identity, false},
    {"sigma", Link::softplus, false},
};
const ParamSpec kSkewTParams[] = {
    {"mu", Link::identity, false},
    {"sigma", Link::softplus, false},
    {"alpha", Link::softplus, false},
    {"nu", Link::softplus, true},
};

class IdentityFamily final : public DistributionFamily {
 public:
  FamilyKind kind() const noexcept override { return FamilyKind::identity; }
  std::span<const ParamSpec> params() const noexcept override {
    return std::span<const ParamSpec>(kIdentityParams, 0);
  }
  void validate(std::span<const double>) const override {}
  Tails cdf(double y, std::span<const double>) const override {
    return {norm_cdf(y), norm_cdf(-y)};
  }
  double log_pdf(double y, std::span<const double>) const override { return norm_logpdf(y); }
  double quantile(double p, std::span<const double>) const override { return norm_quantile(p); }
  double quantile_upper(double q, std::span<const double>) const override {
    return norm_quantile_upper(q);
  }
  GEval evaluate(double y, std::span<const double>, bool) const override {
    GEval g;
    g.ytilde = y;
    return g;
  }
  std::vector<double> moment_estimates(double, double) const override { return {}; }

 protected:
  void parameter_gradient(double, std::span<const double>, std::span<double>,
                          std::span<double>) const override {}
};

class GaussianFamily final : public DistributionFamily {
 public:
  FamilyKind kind() const noexcept override { return FamilyKind::gaussian; }
  std::span<const ParamSpec> params() const noexcept override { return kGaussianParams; }

  void validate(std::span<const double> th) const override {
    if (th.size() != 2 || !std::isfinite(th[0]) || !(th[1] > 0.0) || !std::isfinite(th[1])) {
      throw DomainError("gaussian family needs finite mu and sigma > 0");
    }
  }
  Tails cdf(double y, std::span<const double> th) const override {
    const double z = (y - th[0]) / th[1];
    return {norm_cdf(z), norm_cdf(-z)};
  }
  double log_pdf(double y, std::span<const double> th) const override {
    return norm_logpdf((y - th[0]) / th[1]) - std::log(th[1]);
  }
  double quantile(double p, std::span<const double> th) const override {
    return th[0] + th[1] * norm_quantile(p);
  }
  double quantile_upper(double q, std::span<const double> th) const override {
    return th[0] + th[1] * norm_quantile_upper(q);
  }
  GEval evaluate(double y, std::span<const double> th, bool with_gradient) const override {
    GEval g;
    const double s = th[1];
    g.ytilde = (y - th[0]) / s;
    g.log_slope = -std::log(s);
    if (with_gradient) {
      g.d_ytilde[0] = -1.0 / s;
      g.d_ytilde[1] = -g.ytilde / s;
      g.d_log_slope[1] = -1.0 / s;
    }
    return g;
  }
  std::vector<double> moment_estimates(double mean, double sd) const override {
    return {mean, sd};
  }

 protected:
  void parameter_gradient(double y, std::span<const double> th, std::span<double> d_cdf,
                          std::span<double> d_logpdf) const override {
    const double z = (y - th[0]) / th[1];
    const double f = std::exp(norm_logpdf(z)) / th[1];
    d_cdf[0] = -f;
    d_cdf[1] = -z * f;
    d_logpdf[0] = z / th[1];
    d_logpdf[1] = (z * z - 1.0) / th[1];
  }
};

// Skew-t type 3 (Fernandez-Steel two-piece t): scale alpha*z left of mu and
// z/alpha right of mu, with density 2 alpha / (1 + alpha^2) / sigma * t_nu(.).
class SkewT3Family final : public DistributionFamily {
 public:
  FamilyKind kind() const noexcept override { return FamilyKind::skew_t3; }
  std::span<const ParamSpec> params() const noexcept override { return kSkewTParams; }

  void validate(std::span<const double> th) const override {
    if (th.size() != 4) throw DomainError("skew-t3 family needs 4 parameters");
    if (!std::isfinite(th[0])) throw DomainError("skew-t3: non-finite location");
    for (int p = 1; p < 4; ++p) {
      if (!(th[p] > 0.0) || !std::isfinite(th[p])) {
        std::ostringstream os;
        os << "skew-t3: parameter " << kSkewTParams[p].name << " must be positive, got " << th[p];
        throw DomainError(os.str());
      }
    }
  }

  Tails cdf(double y, std::span<const double> th) const override {
    const double z = (y - th[0]) / th[1];
    const double a = th[2], a2 = a * a, nu = th[3];
    if (z < 0.0) {
      const Tails t = t_tails(a * z, nu);
      const double lower = 2.0 * t.lower / (1.0 + a2);
      return {lower, (a2 + (t.upper - t.lower)) / (1.0 + a2)};
    }
    const Tails t = t_tails(z / a, nu);
    const double upper = 2.0 * a2 * t.upper / (1.0 + a2);
    return {(1.0 + a2 * (t.lower - t.upper)) / (1.0 + a2), upper};
  }

  double log_pdf(double y, std::span<const double> th) const override {
    const double z = (y - th[0]) / th[1];
    const double a = th[2];
    const double x = z < 0.0 ? a * z : z / a;
    return std::numbers::ln2 + std::log(a) - std::log1p(a * a) - std::log(th[1]) +
           t_logpdf(x, th[3]);
  }

  double quantile(double p, std::span<const double> th) const override {
    const double a = th[2], a2 = a * a;
    const StudentT t(th[3]);
    const double p0 = 1.0 / (1.0 + a2);
    double z;
    if (p < p0) {
      z = boost::math::quantile(t, 0.5 * p * (1.0 + a2)) / a;
    } else {
      const double q = 1.0 - p;
      if (q <= 0.5 * a2 / (1.0 + a2) * 2.0 && q < 0.25) return quantile_upper(q, th);
      z = a * boost::math::quantile(t, 0.5 + (p - p0) * (1.0 + a2) / (2.0 * a2));
    }
    return th[0] + th[1] * z;
  }

  double quantile_upper(double q, std::span<const double> th) const override {
    const double a = th[2], a2 = a * a;
    const double q0 = a2 / (1.0 + a2);
    if (q > q0) return quantile(1.0 - q, th);
    const StudentT t(th[3]);
    const double x = boost::math::quantile(boost::math::complement(t, q * (1.0 + a2) / (2.0 * a2)));
    return th[0] + th[1] * a * x;
  }

  std::vector<double> moment_estimates(double mean, double sd) const override {
    constexpr double nu0 = 10.0;
    return {mean, sd * std::sqrt((nu0 - 2.0) / nu0), 1.0, nu0};
  }

 protected:
  void parameter_gradient(double y, std::span<const double> th, std::span<double> d_cdf,
                          std::span<double> d_logpdf) const override {
    const double sigma = th[1], a = th[2], a2 = a * a, nu = th[3];
    const double z = (y - th[0]) / sigma;
    const bool left = z < 0.0;
    const double s = left ? a : 1.0 / a;
    const double x = s * z;
    const double logf = log_pdf(y, th);
    const double f = std::exp(logf);
    const double tx = std::exp(t_logpdf(x, nu));
    const Tails T = t_tails(x, nu);
    const double opa = 1.0 + a2;

    d_cdf[0] = -f;
    d_cdf[1] = -z * f;
    if (left) {
      d_cdf[2] = -4.0 * a / (opa * opa) * T.lower + 2.0 / opa * tx * z;
      d_cdf[3] = 2.0 / opa * t_cdf_dnu(x, nu);
    } else {
      d_cdf[2] = -4.0 * a / (opa * opa) * T.upper - 2.0 / opa * tx * z;
      d_cdf[3] = 2.0 * a2 / opa * t_cdf_dnu(x, nu);
    }

    const double dlt = -(nu + 1.0) * x / (nu + x * x);
    d_logpdf[0] = dlt * (-s / sigma);
    d_logpdf[1] = -1.0 / sigma + dlt * (-x / sigma);
    d_logpdf[2] = 1.0 / a - 2.0 * a / opa + dlt * (left ? z : -z / a2);
    d_logpdf[3] = 0.5 * boost::math::digamma(0.5 * (nu + 1.0), Pol()) -
                  0.5 * boost::math::digamma(0.5 * nu, Pol()) - 0.5 / nu -
                  0.5 * std::log1p(x * x / nu) + 0.5 * (nu + 1.0) * x * x / (nu * (nu + x * x));
  }
};

}  // namespace

FamilyKind parse_family(std::string_view name) {
  if (name == "identity") return FamilyKind::identity;
  if (name == "gaussian") return FamilyKind::gaussian;
  if (name == "skew-t3" || name == "skew_t3") return FamilyKind::skew_t3;
  throw DomainError("unknown distribution family '" + std::string(name) + "'");
}

std::string_view family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::identity: return "identity";
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::skew_t3: return "skew-t3";
  }
  return "?";
}

double softplus(double eta) {
  if (eta > 30.0) return eta + std::log1p(std::exp(-eta));
  return std::log1p(std::exp(eta));
}

double softplus_inverse(double x) {
  if (!(x > 0.0)) throw DomainError("softplus_inverse needs a positive argument");
  return x + std::log(-std::expm1(-x));
}

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double norm_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  if (p > 0.5) return norm_quantile_upper(1.0 - p);
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p, Pol());
}

double norm_quantile_upper(double q) {
  if (q <= 0.0) return std::numeric_limits<double>::infinity();
  if (q >= 1.0) return -std::numeric_limits<double>::infinity();
  if (q > 0.5) return norm_quantile(1.0 - q);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q, Pol());
}

std::size_t DistributionFamily::local_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params()) n += p.shared ? 0 : 1;
  return n;
}

GEval DistributionFamily::evaluate(double y, std::span<const double> theta,
                                   bool with_gradient) const {
  GEval g;
  Tails t = cdf(y, theta);
  if (t.lower <= t.upper) {
    if (!(t.lower >= kTiny)) {
      t.lower = kTiny;
      g.saturated = true;
    }
    g.ytilde = norm_quantile(t.lower);
  } else {
    if (!(t.upper >= kTiny)) {
      t.upper = kTiny;
      g.saturated = true;
    }
    g.ytilde = norm_quantile_upper(t.upper);
  }
  g.log_slope = log_pdf(y, theta) - norm_logpdf(g.ytilde);
  if (with_gradient && !g.saturated) {
    std::array<double, kMaxParams> dc{}, dl{};
    const std::size_t P = param_count();
    parameter_gradient(y, theta, std::span<double>(dc.data(), P), std::span<double>(dl.data(), P));
    const double phi = std::exp(norm_logpdf(g.ytilde));
    for (std::size_t p = 0; p < P; ++p) {
      g.d_ytilde[p] = dc[p] / phi;
      g.d_log_slope[p] = dl[p] + g.ytilde * g.d_ytilde[p];
    }
  }
  return g;
}

std::unique_ptr<DistributionFamily> make_family(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::identity: return std::make_unique<IdentityFamily>();
    case FamilyKind::gaussian: return std::make_unique<GaussianFamily>();
    case FamilyKind::skew_t3: return std::make_unique<SkewT3Family>();
  }
  throw DomainError("unknown distribution family");
}

double g_forward(double y, std::span<const double> theta, const DistributionFamily& family,
                 Saturation* sat) {
  family.validate(theta);
  const GEval g = family.evaluate(y, theta, false);
  if (g.saturated && sat) ++sat->count;
  return g.ytilde;
}

double g_log_derivative(double y, std::span<const double> theta,
                        const DistributionFamily& family) {
  family.validate(theta);
  return family.evaluate(y, theta, false).log_slope;
}

double g_derivative(double y, std::span<const double> theta, const DistributionFamily& family) {
  return std::exp(g_log_derivative(y, theta, family));
}

double g_inverse(double ytilde, std::span<const double> theta, const DistributionFamily& family) {
  family.validate(theta);
  switch (family.kind()) {
    case FamilyKind::identity: return ytilde;
    case FamilyKind::gaussian: return theta[0] + theta[1] * ytilde;
    default: break;
  }
  if (ytilde <= 0.0) return family.quantile(norm_cdf(ytilde), theta);
  return family.quantile_upper(norm_cdf(-ytilde), theta);
}

void apply_links(const DistributionFamily& family, std::span<const double> eta,
                 std::span<double> theta) {
  const auto ps = family.params();
  for (std::size_t p = 0; p < ps.size(); ++p) {
    theta[p] = ps[p].link == Link::softplus ? softplus(eta[p]) : eta[p];
  }
}

void link_derivatives(const DistributionFamily& family, std::span<const double> eta,
                      std::span<double> dtheta) {
  const auto ps = family.params();
  for (std::size_t p = 0; p < ps.size(); ++p) {
    dtheta[p] = ps[p].link == Link::softplus ? sigmoid(eta[p]) : 1.0;
  }
}

void invert_links(const DistributionFamily& family, std::span<const double> theta,
                  std::span<double> eta) {
  const auto ps = family.params();
  for (std::size_t p = 0; p < ps.size(); ++p) {
    eta[p] = ps[p].link == Link::softplus ? softplus_inverse(theta[p]) : theta[p];
  }
}

}  // namespace sct::marginal
