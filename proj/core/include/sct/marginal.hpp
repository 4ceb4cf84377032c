#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sct::marginal {

enum class FamilyKind { identity, gaussian, skew_t3 };
enum class Link { identity, softplus };

FamilyKind parse_family(std::string_view name);
std::string_view family_name(FamilyKind kind);

/// log(1 + exp(eta)) without overflow or underflow to zero.
double softplus(double eta);
/// Inverse of softplus for x > 0: log(exp(x) - 1).
double softplus_inverse(double x);
/// d softplus / d eta
double sigmoid(double eta);

/// Standard-normal helpers shared across modules.
double norm_cdf(double x);
double norm_logpdf(double x);
/// Phi^{-1}(p), accurate for p close to 0.
double norm_quantile(double p);
/// Phi^{-1}(1 - q), accurate for q close to 0.
double norm_quantile_upper(double q);

inline constexpr std::size_t kMaxParams = 4;

struct ParamSpec {
  std::string_view name;
  Link link;
  bool shared;  ///< one value for all locations
};

/// Both tails of a CDF, kept separately so the upper tail stays accurate.
struct Tails {
  double lower;  ///< F(y)
  double upper;  ///< 1 - F(y)
};

/// Derivatives of the parametric transform at one point, with respect to the
/// constrained parameters in family order.
struct GEval {
  double ytilde = 0.0;                         ///< Phi^{-1}(F(y))
  double log_slope = 0.0;                      ///< log dG/dy
  std::array<double, kMaxParams> d_ytilde{};   ///< d ytilde / d theta
  std::array<double, kMaxParams> d_log_slope{};
  bool saturated = false;
};

/// Counts CDF evaluations that hit 0 or 1 and were clamped.
struct Saturation {
  std::size_t count = 0;
};

/// A parametric CDF family F(y | theta) used for the probability transform.
/// Further families (GEV, gamma, ...) plug in by implementing this interface.
class DistributionFamily {
 public:
  virtual ~DistributionFamily() = default;

  virtual FamilyKind kind() const noexcept = 0;
  virtual std::span<const ParamSpec> params() const noexcept = 0;

  std::size_t param_count() const noexcept { return params().size(); }
  std::size_t local_count() const noexcept;
  std::size_t shared_count() const noexcept { return param_count() - local_count(); }

  /// Throws DomainError if the constrained parameters are invalid.
  virtual void validate(std::span<const double> theta) const = 0;

  virtual Tails cdf(double y, std::span<const double> theta) const = 0;
  virtual double log_pdf(double y, std::span<const double> theta) const = 0;
  /// F^{-1}(p)
  virtual double quantile(double p, std::span<const double> theta) const = 0;
  /// F^{-1}(1 - q)
  virtual double quantile_upper(double q, std::span<const double> theta) const = 0;

  /// G(y) together with its parameter derivatives.
  virtual GEval evaluate(double y, std::span<const double> theta, bool with_gradient) const;

  /// Method-of-moments starting values (constrained scale) from a sample.
  virtual std::vector<double> moment_estimates(double mean, double sd) const = 0;

 protected:
  /// d F / d theta (lower tail) and d log f / d theta at y.
  virtual void parameter_gradient(double y, std::span<const double> theta,
                                  std::span<double> d_cdf, std::span<double> d_logpdf) const = 0;
};

std::unique_ptr<DistributionFamily> make_family(FamilyKind kind);

/// G maps the data to the standard-normal scale: Phi^{-1}(F(y | theta)).
double g_forward(double y, std::span<const double> theta, const DistributionFamily& family,
                 Saturation* sat = nullptr);
/// dG/dy = f(y) / phi(G(y)).
double g_derivative(double y, std::span<const double> theta, const DistributionFamily& family);
double g_log_derivative(double y, std::span<const double> theta,
                        const DistributionFamily& family);
/// F^{-1}(Phi(ytilde)).
double g_inverse(double ytilde, std::span<const double> theta, const DistributionFamily& family);

/// Maps unconstrained (eta-scale) parameters to constrained ones through the links.
void apply_links(const DistributionFamily& family, std::span<const double> eta,
                 std::span<double> theta);
/// d theta / d eta for each parameter.
void link_derivatives(const DistributionFamily& family, std::span<const double> eta,
                      std::span<double> dtheta);
void invert_links(const DistributionFamily& family, std::span<const double> theta,
                  std::span<double> eta);

}  // namespace sct::marginal
