#pragma once

#include <array>
#include <span>
#include <vector>

namespace sct::onion {

/// Equidistant cubic B-spline knot grid for the onion transformation.
///
/// Knots are indexed k_{-2} < ... < k_{m+3} with k_2 = a and k_{m-1} = b.
/// With D free parameters there are m = D + 5 interior knots and J = D + 7
/// basis functions; the spacing is k = (b - a) / (m - 3).
class KnotGrid {
 public:
  KnotGrid() = default;
  /// Throws DomainError unless a < b and D >= 1.
  KnotGrid(double a, double b, int D);

  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  int free_count() const noexcept { return D_; }
  int interior_count() const noexcept { return D_ + 5; }  // m
  int basis_count() const noexcept { return D_ + 7; }     // J
  double spacing() const noexcept { return k_; }

  /// k_j for j in [-2, m + 3]
  double knot(int j) const;
  double first_interior() const { return knot(1); }
  double last_interior() const { return knot(interior_count()); }

  /// Span s with k_s <= x < k_{s+1}, clamped to [1, m - 1] so that x = k_m
  /// lands in the last span.
  int span(double x) const;

 private:
  double a_ = -4.0;
  double b_ = 4.0;
  int D_ = 0;
  double k_ = 0.0;
};

/// Fixed and free log-increments for a given unconstrained beta.
///
/// gamma is stored 1-based in spirit: gamma()[j - 1] holds gamma_j.
std::vector<double> gamma_from_beta(std::span<const double> beta, const KnotGrid& knots);

/// Immutable per-location spline coefficients.
class OnionCoefficients {
 public:
  OnionCoefficients() = default;
  OnionCoefficients(const KnotGrid& knots, std::span<const double> beta);
  /// beta = 0, i.e. the identity transformation
  static OnionCoefficients identity(const KnotGrid& knots);

  const std::vector<double>& beta() const noexcept { return beta_; }
  const std::vector<double>& gamma() const noexcept { return gamma_; }
  /// increments()[j] = exp(gamma_j) for j = 2..J; entries 0 and 1 are 0
  const std::vector<double>& increments() const noexcept { return incr_; }
  /// control()[j] = gamma_1 + sum_{l=2}^j exp(gamma_l) for j = 1..J; entry 0 unused
  const std::vector<double>& control() const noexcept { return control_; }
  /// softmax(beta), the share of each free increment
  const std::vector<double>& weights() const noexcept { return weights_; }

 private:
  std::vector<double> beta_;
  std::vector<double> gamma_;
  std::vector<double> incr_;
  std::vector<double> control_;
  std::vector<double> weights_;
};

/// Nonzero B-spline basis values of the given degree on span s (Cox-de Boor).
/// For degree p the values belong to bases j = s + 3 - p, ..., s + 3
/// (1-based, in the indexing used by the control points).
void cox_de_boor(const KnotGrid& knots, int span, double x, int degree, double* out);

/// Raw spline sum over [k_1, k_m], without the identity splice.
double spline_branch(double x, const OnionCoefficients& c, const KnotGrid& knots);
/// Derivative of the raw spline: sum_j B_j^(2)(x) exp(gamma_j) / k.
double spline_branch_derivative(double x, const OnionCoefficients& c, const KnotGrid& knots);

/// The onion transformation. The spline and the identity coincide on
/// [k_1, a] and [b, k_m], so the spline branch is only entered on (a, b)
/// and the tails are exact.
double h_forward(double x, const OnionCoefficients& c, const KnotGrid& knots);
double h_derivative(double x, const OnionCoefficients& c, const KnotGrid& knots);
double h_second_derivative(double x, const OnionCoefficients& c, const KnotGrid& knots);

/// Inverse by bracketing on the knot values followed by safeguarded Newton.
/// Throws NumericalError if refinement does not converge.
double h_inverse(double y, const OnionCoefficients& c, const KnotGrid& knots);

/// Everything the likelihood needs about H at one point.
struct PointEval {
  double value = 0.0;   ///< H(x)
  double slope = 1.0;   ///< H'(x)
  double curve = 0.0;   ///< H''(x)
  int span = 0;         ///< 0 when x is outside (a, b)
  std::array<double, 4> cubic{};
  std::array<double, 3> quad{};
};

PointEval evaluate(double x, const OnionCoefficients& c, const KnotGrid& knots);

/// Accumulates d/d beta of  sum_n [ w_value_n * H(x_n) + w_slope_n * H'(x_n) ]
/// for one location.
class BetaGradient {
 public:
  explicit BetaGradient(const KnotGrid& knots);
  void reset();
  void add(const PointEval& p, double w_value, double w_slope);
  /// Writes the D-vector gradient with respect to beta.
  void finish(const OnionCoefficients& c, std::span<double> grad_beta) const;

 private:
  const KnotGrid* knots_;
  std::vector<double> through_;  // weight on T_l = 1 for all l <= span
  std::vector<double> local_;    // weights on exp(gamma_l), per l
};

/// Precomputed basis values on a regular grid over [k_1, k_m]; linear
/// interpolation of the basis gives a fast approximate evaluator.
class SplineEvalTable {
 public:
  SplineEvalTable(const KnotGrid& knots, int grid_size = 1000);

  int size() const noexcept { return grid_size_; }
  double abscissa(int g) const;

  double forward(double x, const OnionCoefficients& c) const;
  double derivative(double x, const OnionCoefficients& c) const;

 private:
  double interpolate(double x, const std::vector<double>& rows, const std::vector<double>& coef) const;

  KnotGrid knots_;
  int grid_size_;
  double lo_, hi_, step_;
  std::vector<double> cubic_rows_;  // grid_size x J
  std::vector<double> quad_rows_;   // grid_size x J
};

}  // namespace sct::onion
