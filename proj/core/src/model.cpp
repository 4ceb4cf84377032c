#include "sct/model.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>

#include "sct/errors.hpp"

namespace sct {

void Ensemble::validate() const {
  if (static_cast<std::size_t>(Y.cols()) != locs.size()) {
    throw DomainError("ensemble has " + std::to_string(Y.cols()) + " columns for " +
                      std::to_string(locs.size()) + " locations");
  }
  for (Eigen::Index j = 0; j < Y.rows(); ++j) {
    for (Eigen::Index l = 0; l < Y.cols(); ++l) {
      if (!std::isfinite(Y(j, l))) {
        std::ostringstream os;
        os << "non-finite value in replicate " << j << " at location " << l;
        throw DomainError(os.str());
      }
    }
  }
}

Ensemble Ensemble::rows(std::span<const std::size_t> idx) const {
  Ensemble e{locs, Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()), Y.cols())};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    e.Y.row(static_cast<Eigen::Index>(r)) = Y.row(static_cast<Eigen::Index>(idx[r]));
  }
  return e;
}

FittedModel FittedModel::fit(const Ensemble& train, const ModelConfig& config, FitReport* report,
                             const StageTraceSink& sink) {
  config.validate();
  train.validate();
  if (train.replicates() < 2) throw DomainError("fitting needs at least two replicates");

  FittedModel m;
  m.config_ = config;
  m.locs_ = train.locs;
  const double n = static_cast<double>(train.Y.size());
  if (config.standardize) {
    m.pre_.mean = train.Y.mean();
    const double var = (train.Y.array() - m.pre_.mean).square().sum() / std::max(1.0, n - 1.0);
    m.pre_.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  m.loc_scale_.resize(train.locations());
  for (std::size_t l = 0; l < train.locations(); ++l) {
    const auto col = train.Y.col(static_cast<Eigen::Index>(l));
    const double mu = col.mean();
    m.loc_scale_[l] = std::sqrt((col.array() - mu).square().sum() / static_cast<double>(col.size() - 1));
  }
  const Eigen::MatrixXd Ys = (train.Y.array() - m.pre_.mean) / m.pre_.scale;

  m.ordering_ = geo::maximin_order(m.locs_, 0);
  const est::Stage1Problem problem(m.locs_, m.ordering_, config);
  auto tagged = [&sink](std::string_view stage) -> opt::TraceSink {
    if (!sink) return {};
    return [&sink, stage](const opt::TraceRecord& r) { sink(stage, r); };
  };
  est::Stage1Result s1 = est::stage1_fit(Ys, problem, tagged("stage1"));
  m.stage1_x_ = s1.x;
  m.marginal_ = s1.state;
  est::Stage2Result s2 = est::stage2_fit(Ys, m.marginal_, m.locs_, m.ordering_, config, tagged("stage2"));
  m.posterior_ = std::move(s2.fit.posterior);
  if (report) {
    report->stage1 = std::move(s1);
    report->stage2_seconds = s2.seconds;
    report->saturated = s2.saturated;
    report->stage2 = std::move(s2.fit.optimization);
  }
  return m;
}

FittedModel FittedModel::assemble(const ModelConfig& config, geo::LocationSet locs,
                                  Standardization pre, std::vector<double> location_scale,
                                  std::vector<double> stage1_x, const tm::TMHyper& hyper,
                                  std::size_t m, Eigen::MatrixXd pseudo) {
  config.validate();
  FittedModel out;
  out.config_ = config;
  out.locs_ = std::move(locs);
  out.pre_ = pre;
  out.loc_scale_ = std::move(location_scale);
  out.stage1_x_ = std::move(stage1_x);
  out.ordering_ = geo::maximin_order(out.locs_, 0);
  const est::Stage1Problem problem(out.locs_, out.ordering_, config);
  out.marginal_ = problem.state(out.stage1_x_);
  tm::TMSettings settings;
  settings.g = config.g;
  settings.epsilon = config.epsilon;
  settings.max_conditioning = config.max_conditioning;
  tm::TMStructure s = tm::tm_structure(out.locs_, out.ordering_, config.max_conditioning);
  s.m = m;
  out.posterior_ = tm::TMPosterior(std::move(pseudo), std::move(s), hyper, settings);
  return out;
}

std::string FittedModel::fingerprint() const {
  // FNV-1a, stable across platforms
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : render_config(config_)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<double> FittedModel::to_ztilde(std::span<const double> y) const {
  if (y.size() != size()) throw DomainError("field length does not match the model");
  std::vector<double> ys(y.size());
  for (std::size_t l = 0; l < y.size(); ++l) ys[l] = (y[l] - pre_.mean) / pre_.scale;
  return marginal_.forward_field(ys);
}

std::vector<double> FittedModel::to_z(std::span<const double> y) const {
  return posterior_.apply(to_ztilde(y));
}

std::vector<double> FittedModel::from_ztilde(std::span<const double> ztilde) const {
  std::vector<double> y = marginal_.inverse_field(ztilde);
  for (double& v : y) v = pre_.mean + pre_.scale * v;
  return y;
}

std::vector<double> FittedModel::from_z(std::span<const double> z) const {
  return from_ztilde(posterior_.invert(z));
}

FittedModel::Decomposition FittedModel::decompose(std::span<const double> y) const {
  if (y.size() != size()) throw DomainError("field length does not match the model");
  Decomposition d;
  std::vector<double> zt(y.size());
  for (std::size_t l = 0; l < y.size(); ++l) {
    const double ys = (y[l] - pre_.mean) / pre_.scale;
    zt[l] = marginal_.forward(l, ys);
    d.parametric += marginal_.log_jacobian_g(l, ys);
    d.onion += marginal_.log_jacobian_h(l, ys);
  }
  d.transport = posterior_.log_density(zt);
  d.adjustment = static_cast<double>(y.size()) * std::log(pre_.scale);
  return d;
}

double FittedModel::log_density(std::span<const double> y) const { return decompose(y).total(); }

}  // namespace sct
