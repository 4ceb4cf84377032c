#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "sct/errors.hpp"
#include "sct/model.hpp"

namespace sct {

Eigen::MatrixXd draw_noise(std::size_t count, std::size_t L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(L));
  for (Eigen::Index r = 0; r < Z.rows(); ++r) {
    for (Eigen::Index l = 0; l < Z.cols(); ++l) Z(r, l) = nd(rng);
  }
  return Z;
}

Eigen::MatrixXd sample_from_noise(const FittedModel& model, const Eigen::MatrixXd& noise) {
  if (static_cast<std::size_t>(noise.cols()) != model.size()) {
    throw DomainError("noise width does not match the model");
  }
  Eigen::MatrixXd out(noise.rows(), noise.cols());
  std::vector<double> z(model.size());
  for (Eigen::Index r = 0; r < noise.rows(); ++r) {
    for (Eigen::Index l = 0; l < noise.cols(); ++l) z[static_cast<std::size_t>(l)] = noise(r, l);
    std::vector<double> y;
    try {
      y = model.from_z(z);
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "inversion failed for sample " << r << ": " << e.what();
      throw NumericalError(os.str());
    }
    for (Eigen::Index l = 0; l < noise.cols(); ++l) out(r, l) = y[static_cast<std::size_t>(l)];
  }
  return out;
}

Eigen::MatrixXd sample(const FittedModel& model, std::size_t count, std::uint64_t seed) {
  return sample_from_noise(model, draw_noise(count, model.size(), seed));
}

ScoreReport log_score(const FittedModel& model, const Eigen::MatrixXd& test, std::string split) {
  if (test.rows() == 0) throw DomainError("log_score needs at least one test replicate");
  if (static_cast<std::size_t>(test.cols()) != model.size()) {
    throw DomainError("test width does not match the model");
  }
  ScoreReport r;
  r.split = std::move(split);
  r.adjustment = static_cast<double>(model.size()) * std::log(model.standardization().scale);
  for (double s : model.location_scale()) r.location_adjustment += std::log(s);
  std::vector<double> y(model.size());
  for (Eigen::Index j = 0; j < test.rows(); ++j) {
    for (Eigen::Index l = 0; l < test.cols(); ++l) y[static_cast<std::size_t>(l)] = test(j, l);
    const auto d = model.decompose(y);
    r.log_density.push_back(d.transport + d.onion + d.parametric);
  }
  const double n = static_cast<double>(r.log_density.size());
  double mean = 0.0;
  for (double v : r.log_density) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : r.log_density) ss += (v - mean) * (v - mean);
  r.mean_negative = -mean + r.adjustment;
  r.standard_error = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  return r;
}

Direction parse_direction(std::string_view name) {
  if (name == "above") return Direction::above;
  if (name == "below") return Direction::below;
  throw DomainError("direction must be 'above' or 'below'");
}

std::vector<double> exceedance_map(const Eigen::MatrixXd& samples, double threshold, Direction dir) {
  if (samples.rows() == 0) throw DomainError("exceedance_map needs samples");
  std::vector<double> p(static_cast<std::size_t>(samples.cols()), 0.0);
  for (Eigen::Index l = 0; l < samples.cols(); ++l) {
    std::size_t hits = 0;
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
      const double v = samples(r, l);
      hits += dir == Direction::above ? (v > threshold) : (v < threshold);
    }
    p[static_cast<std::size_t>(l)] = static_cast<double>(hits) / static_cast<double>(samples.rows());
  }
  return p;
}

double global_quantile(const Eigen::MatrixXd& values, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  if (values.size() == 0) throw DomainError("global_quantile needs values");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

RoundtripReport roundtrip(const FittedModel& model, const Eigen::MatrixXd& Y) {
  RoundtripReport r;
  std::vector<double> y(model.size());
  for (Eigen::Index j = 0; j < Y.rows(); ++j) {
    for (Eigen::Index l = 0; l < Y.cols(); ++l) y[static_cast<std::size_t>(l)] = Y(j, l);
    const auto z = model.to_z(y);
    const auto back = model.from_z(z);
    const auto z2 = model.to_z(back);
    for (std::size_t l = 0; l < y.size(); ++l) {
      if (!std::isfinite(z[l]) || !std::isfinite(back[l]) || !std::isfinite(z2[l])) r.all_finite = false;
      const double ey = std::abs(back[l] - y[l]);
      r.max_y_error = std::max(r.max_y_error, ey);
      r.max_y_relative = std::max(r.max_y_relative, ey / std::max(1.0, std::abs(y[l])));
      r.max_z_error = std::max(r.max_z_error, std::abs(z2[l] - z[l]));
    }
    const double ld = model.log_density(back);
    if (!std::isfinite(ld)) r.all_finite = false;
    ++r.fields;
  }
  return r;
}

}  // namespace sct
