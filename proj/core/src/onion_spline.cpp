#include "sct/onion_spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sct/errors.hpp"

namespace sct::onion {

KnotGrid::KnotGrid(double a, double b, int D) : a_(a), b_(b), D_(D) {
  if (!std::isfinite(a) || !std::isfinite(b) || !(a < b)) {
    throw DomainError("onion knots require finite a < b");
  }
  if (D < 1) throw DomainError("onion knots require D >= 1");
  k_ = (b - a) / static_cast<double>(interior_count() - 3);
}

double KnotGrid::knot(int j) const {
  const int m = interior_count();
  if (j == 2) return a_;
  if (j == m - 1) return b_;
  return a_ + static_cast<double>(j - 2) * k_;
}

int KnotGrid::span(double x) const {
  const int m = interior_count();
  int s = static_cast<int>(std::floor((x - a_) / k_)) + 2;
  s = std::clamp(s, 1, m - 1);
  // floor() on the scaled coordinate can be off by one next to a knot
  if (s > 1 && x < knot(s)) --s;
  if (s < m - 1 && x >= knot(s + 1)) ++s;
  return s;
}

std::vector<double> gamma_from_beta(std::span<const double> beta, const KnotGrid& knots) {
  const int D = knots.free_count();
  if (static_cast<int>(beta.size()) != D) {
    throw DomainError("gamma_from_beta: beta has the wrong length");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double b : beta) {
    if (!std::isfinite(b)) throw DomainError("gamma_from_beta: non-finite beta");
    mx = std::max(mx, b);
  }
  double sum = 0.0;
  for (double b : beta) sum += std::exp(b - mx);
  const double lse = mx + std::log(sum);
  const double k = knots.spacing();
  const double log_k = std::log(k);
  const double log_span = std::log(static_cast<double>(knots.interior_count() - 5) * k);

  const int J = knots.basis_count();
  std::vector<double> gamma(static_cast<std::size_t>(J));
  gamma[0] = knots.knot(0);
  for (int j = 2; j <= 4; ++j) gamma[j - 1] = log_k;
  for (int j = 5; j <= J - 3; ++j) gamma[j - 1] = beta[j - 5] - lse + log_span;
  for (int j = J - 2; j <= J; ++j) gamma[j - 1] = log_k;
  return gamma;
}

OnionCoefficients::OnionCoefficients(const KnotGrid& knots, std::span<const double> beta)
    : beta_(beta.begin(), beta.end()), gamma_(gamma_from_beta(beta, knots)) {
  const int J = knots.basis_count();
  const int D = knots.free_count();
  incr_.assign(static_cast<std::size_t>(J) + 1, 0.0);
  control_.assign(static_cast<std::size_t>(J) + 1, 0.0);
  const double k = knots.spacing();
  for (int j = 2; j <= J; ++j) {
    // fixed increments are exactly k rather than exp(log k)
    incr_[j] = (j <= 4 || j >= J - 2) ? k : std::exp(gamma_[j - 1]);
  }
  control_[1] = gamma_[0];
  for (int j = 2; j <= J; ++j) control_[j] = control_[j - 1] + incr_[j];

  double mx = *std::max_element(beta_.begin(), beta_.end());
  weights_.resize(static_cast<std::size_t>(D));
  double s = 0.0;
  for (int d = 0; d < D; ++d) s += (weights_[d] = std::exp(beta_[d] - mx));
  for (auto& w : weights_) w /= s;
}

OnionCoefficients OnionCoefficients::identity(const KnotGrid& knots) {
  std::vector<double> zero(static_cast<std::size_t>(knots.free_count()), 0.0);
  return OnionCoefficients(knots, zero);
}

void cox_de_boor(const KnotGrid& knots, int span, double x, int degree, double* out) {
  // knot vector U_r = k_{r-2}; span s sits at U-index s + 2
  const int i = span + 2;
  auto U = [&](int r) { return knots.knot(r - 2); };
  double left[4], right[4];
  out[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - U(i + 1 - j);
    right[j] = U(i + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out[j] = saved;
  }
}

double spline_branch(double x, const OnionCoefficients& c, const KnotGrid& knots) {
  const int s = knots.span(x);
  double B[4];
  cox_de_boor(knots, s, x, 3, B);
  const auto& cp = c.control();
  return B[0] * cp[s] + B[1] * cp[s + 1] + B[2] * cp[s + 2] + B[3] * cp[s + 3];
}

double spline_branch_derivative(double x, const OnionCoefficients& c, const KnotGrid& knots) {
  const int s = knots.span(x);
  double B[3];
  cox_de_boor(knots, s, x, 2, B);
  const auto& e = c.increments();
  return (B[0] * e[s + 1] + B[1] * e[s + 2] + B[2] * e[s + 3]) / knots.spacing();
}

PointEval evaluate(double x, const OnionCoefficients& c, const KnotGrid& knots) {
  PointEval p;
  if (!(x > knots.a() && x < knots.b())) {
    p.value = x;
    return p;
  }
  const int s = knots.span(x);
  p.span = s;
  cox_de_boor(knots, s, x, 3, p.cubic.data());
  cox_de_boor(knots, s, x, 2, p.quad.data());
  double lin[2];
  cox_de_boor(knots, s, x, 1, lin);
  const auto& cp = c.control();
  const auto& e = c.increments();
  const double k = knots.spacing();
  p.value = p.cubic[0] * cp[s] + p.cubic[1] * cp[s + 1] + p.cubic[2] * cp[s + 2] +
            p.cubic[3] * cp[s + 3];
  p.slope = (p.quad[0] * e[s + 1] + p.quad[1] * e[s + 2] + p.quad[2] * e[s + 3]) / k;
  p.curve = (lin[0] * (e[s + 2] - e[s + 1]) + lin[1] * (e[s + 3] - e[s + 2])) / (k * k);
  return p;
}

double h_forward(double x, const OnionCoefficients& c, const KnotGrid& knots) {
  if (!(x > knots.a() && x < knots.b())) return x;
  return spline_branch(x, c, knots);
}

double h_derivative(double x, const OnionCoefficients& c, const KnotGrid& knots) {
  if (!(x > knots.a() && x < knots.b())) return 1.0;
  return spline_branch_derivative(x, c, knots);
}

double h_second_derivative(double x, const OnionCoefficients& c, const KnotGrid& knots) {
  return evaluate(x, c, knots).curve;
}

double h_inverse(double y, const OnionCoefficients& c, const KnotGrid& knots) {
  if (!std::isfinite(y)) throw DomainError("h_inverse: non-finite input");
  if (!(y > knots.a() && y < knots.b())) return y;

  const auto& cp = c.control();
  const int m = knots.interior_count();
  auto knot_value = [&](int s) {
    if (s == 2) return knots.a();
    if (s == m - 1) return knots.b();
    return (cp[s] + 4.0 * cp[s + 1] + cp[s + 2]) / 6.0;
  };
  int lo_s = 2, hi_s = m - 1;  // knot_value(lo_s) <= y < knot_value(hi_s)
  while (hi_s - lo_s > 1) {
    const int mid = (lo_s + hi_s) / 2;
    if (knot_value(mid) <= y) lo_s = mid; else hi_s = mid;
  }
  double lo = knots.knot(lo_s), hi = knots.knot(lo_s + 1);
  const double v_lo = knot_value(lo_s), v_hi = knot_value(lo_s + 1);
  double x = lo + (hi - lo) * (y - v_lo) / (v_hi - v_lo);
  x = std::clamp(x, lo, hi);

  const double tol = 1e-14 * std::max(1.0, std::fabs(y));
  for (int it = 0; it < 200; ++it) {
    const PointEval p = evaluate(x, c, knots);
    const double f = p.value - y;
    if (std::fabs(f) <= tol) return x;
    if (f > 0.0) hi = x; else lo = x;
    double next = x - f / p.slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(x))) {
      break;
    }
    x = next;
  }
  const double resid = std::fabs(h_forward(x, c, knots) - y);
  if (resid > 1e-8) {
    std::ostringstream os;
    os << "h_inverse did not converge for y = " << y << " (residual " << resid
       << ", bracket [" << lo << ", " << hi << "])";
    throw NumericalError(os.str());
  }
  return x;
}

BetaGradient::BetaGradient(const KnotGrid& knots) : knots_(&knots) { reset(); }

void BetaGradient::reset() {
  const auto n = static_cast<std::size_t>(knots_->basis_count()) + 2;
  through_.assign(n, 0.0);
  local_.assign(n, 0.0);
}

void BetaGradient::add(const PointEval& p, double w_value, double w_slope) {
  if (p.span == 0) return;
  const int s = p.span;
  // dH/dgamma_l = exp(gamma_l) * sum_{j >= l} B_j(x)
  through_[s] += w_value;
  local_[s + 1] += w_value * (p.cubic[1] + p.cubic[2] + p.cubic[3]);
  local_[s + 2] += w_value * (p.cubic[2] + p.cubic[3]);
  local_[s + 3] += w_value * p.cubic[3];
  // dH'/dgamma_l = B^(2)_l(x) exp(gamma_l) / k
  const double ws = w_slope / knots_->spacing();
  local_[s + 1] += ws * p.quad[0];
  local_[s + 2] += ws * p.quad[1];
  local_[s + 3] += ws * p.quad[2];
}

void BetaGradient::finish(const OnionCoefficients& c, std::span<double> grad_beta) const {
  const int J = knots_->basis_count();
  const int D = knots_->free_count();
  const auto& e = c.increments();
  std::vector<double> suffix(static_cast<std::size_t>(J) + 2, 0.0);
  for (int l = J; l >= 1; --l) suffix[l] = suffix[l + 1] + through_[l];
  double total = 0.0;
  for (int d = 0; d < D; ++d) {
    const int l = d + 5;
    grad_beta[d] = e[l] * (local_[l] + suffix[l]);
    total += grad_beta[d];
  }
  const auto& w = c.weights();
  for (int d = 0; d < D; ++d) grad_beta[d] -= w[d] * total;
}

SplineEvalTable::SplineEvalTable(const KnotGrid& knots, int grid_size)
    : knots_(knots), grid_size_(grid_size) {
  if (grid_size < 2) throw DomainError("SplineEvalTable needs at least two grid points");
  lo_ = knots.first_interior();
  hi_ = knots.last_interior();
  step_ = (hi_ - lo_) / static_cast<double>(grid_size - 1);
  const int J = knots.basis_count();
  cubic_rows_.assign(static_cast<std::size_t>(grid_size) * (J + 1), 0.0);
  quad_rows_.assign(static_cast<std::size_t>(grid_size) * (J + 1), 0.0);
  for (int g = 0; g < grid_size; ++g) {
    const double x = abscissa(g);
    const int s = knots.span(x);
    double B[4], Q[3];
    cox_de_boor(knots, s, x, 3, B);
    cox_de_boor(knots, s, x, 2, Q);
    double* cr = &cubic_rows_[static_cast<std::size_t>(g) * (J + 1)];
    double* qr = &quad_rows_[static_cast<std::size_t>(g) * (J + 1)];
    for (int r = 0; r < 4; ++r) cr[s + r] = B[r];
    for (int r = 0; r < 3; ++r) qr[s + 1 + r] = Q[r];
  }
}

double SplineEvalTable::abscissa(int g) const {
  return g == grid_size_ - 1 ? hi_ : lo_ + step_ * static_cast<double>(g);
}

double SplineEvalTable::interpolate(double x, const std::vector<double>& rows,
                                    const std::vector<double>& coef) const {
  const int J = knots_.basis_count();
  int g = static_cast<int>((x - lo_) / step_);
  g = std::clamp(g, 0, grid_size_ - 2);
  const double w = (x - abscissa(g)) / step_;
  const double* r0 = &rows[static_cast<std::size_t>(g) * (J + 1)];
  const double* r1 = r0 + (J + 1);
  double acc = 0.0;
  for (int j = 1; j <= J; ++j) acc += ((1.0 - w) * r0[j] + w * r1[j]) * coef[j];
  return acc;
}

double SplineEvalTable::forward(double x, const OnionCoefficients& c) const {
  if (!(x > knots_.a() && x < knots_.b())) return x;
  return interpolate(x, cubic_rows_, c.control());
}

double SplineEvalTable::derivative(double x, const OnionCoefficients& c) const {
  if (!(x > knots_.a() && x < knots_.b())) return 1.0;
  return interpolate(x, quad_rows_, c.increments()) / knots_.spacing();
}

}  // namespace sct::onion
