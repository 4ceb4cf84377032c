#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sct/config.hpp"
#include "sct/estimation.hpp"
#include "sct/geometry.hpp"
#include "sct/transport_map.hpp"

namespace sct {

/// N replicate fields (rows) over L locations (columns).
struct Ensemble {
  geo::LocationSet locs;
  Eigen::MatrixXd Y;

  std::size_t replicates() const noexcept { return static_cast<std::size_t>(Y.rows()); }
  std::size_t locations() const noexcept { return static_cast<std::size_t>(Y.cols()); }
  /// Throws DomainError on shape mismatch or non-finite values.
  void validate() const;
  Ensemble rows(std::span<const std::size_t> idx) const;
};

/// Global z-standardization: y_std = (y - mean) / scale.
struct Standardization {
  double mean = 0.0;
  double scale = 1.0;
};

struct FitReport {
  est::Stage1Result stage1;
  double stage2_seconds = 0.0;
  std::size_t saturated = 0;
  opt::OptimizeResult stage2;
};

/// Receives optimizer progress tagged with "stage1" or "stage2".
using StageTraceSink = std::function<void(std::string_view stage, const opt::TraceRecord&)>;

/// The composition (G, H, T) with everything needed to score and sample.
class FittedModel {
 public:
  FittedModel() = default;

  static FittedModel fit(const Ensemble& train, const ModelConfig& config,
                         FitReport* report = nullptr, const StageTraceSink& sink = {});

  /// Rebuilds derived state from stored estimates (used by the reader).
  static FittedModel assemble(const ModelConfig& config, geo::LocationSet locs,
                              Standardization pre, std::vector<double> location_scale,
                              std::vector<double> stage1_x, const tm::TMHyper& hyper,
                              std::size_t m, Eigen::MatrixXd pseudo);

  const ModelConfig& config() const noexcept { return config_; }
  const geo::LocationSet& locations() const noexcept { return locs_; }
  const geo::MaximinOrdering& ordering() const noexcept { return ordering_; }
  const Standardization& standardization() const noexcept { return pre_; }
  const std::vector<double>& location_scale() const noexcept { return loc_scale_; }
  const std::vector<double>& stage1_parameters() const noexcept { return stage1_x_; }
  const est::MarginalState& marginal() const noexcept { return marginal_; }
  const tm::TMPosterior& transport() const noexcept { return posterior_; }
  std::size_t size() const noexcept { return locs_.size(); }
  /// Short digest of the configuration text.
  std::string fingerprint() const;

  /// Original units -> standardized -> (H o G) pseudo-data.
  std::vector<double> to_ztilde(std::span<const double> y) const;
  /// Full forward map to the reference standard-normal space.
  std::vector<double> to_z(std::span<const double> y) const;
  std::vector<double> from_ztilde(std::span<const double> ztilde) const;
  std::vector<double> from_z(std::span<const double> z) const;

  struct Decomposition {
    double transport = 0.0;   ///< sum of log predictive densities of ztilde
    double onion = 0.0;       ///< sum of log dH
    double parametric = 0.0;  ///< sum of log dG
    double adjustment = 0.0;  ///< L log(scale), subtracted once
    double total() const { return transport + onion + parametric - adjustment; }
  };
  Decomposition decompose(std::span<const double> y) const;
  /// Joint log density of y in original units.
  double log_density(std::span<const double> y) const;

 private:
  ModelConfig config_;
  geo::LocationSet locs_;
  geo::MaximinOrdering ordering_;
  Standardization pre_;
  std::vector<double> loc_scale_;
  std::vector<double> stage1_x_;
  est::MarginalState marginal_;
  tm::TMPosterior posterior_;
};

// ---------------------------------------------------------------------------
// sampling and scoring

/// count x L standard-normal reference draws.
Eigen::MatrixXd draw_noise(std::size_t count, std::size_t L, std::uint64_t seed);

/// y* = (G^{-1} o H^{-1} o T^{-1})(z*) row by row.
Eigen::MatrixXd sample_from_noise(const FittedModel& model, const Eigen::MatrixXd& noise);
Eigen::MatrixXd sample(const FittedModel& model, std::size_t count, std::uint64_t seed);

struct ScoreReport {
  std::vector<double> log_density;  ///< per replicate, standardized scale
  double adjustment = 0.0;          ///< L log(scale) of the global standardization
  double location_adjustment = 0.0; ///< sum_i log s_i of per-location training SDs
  double mean_negative = 0.0;       ///< -mean(log_density) + adjustment
  double standard_error = 0.0;
  std::string split;
};

ScoreReport log_score(const FittedModel& model, const Eigen::MatrixXd& test, std::string split = {});

enum class Direction { above, below };
Direction parse_direction(std::string_view name);

/// Per-location empirical frequency of samples above (or below) threshold.
std::vector<double> exceedance_map(const Eigen::MatrixXd& samples, double threshold, Direction dir);

/// Pooled empirical quantile, linear interpolation between order statistics.
double global_quantile(const Eigen::MatrixXd& values, double p);

struct RoundtripReport {
  double max_z_error = 0.0;  ///< |T(H(G(y))) - T(H(G(G^{-1}(H^{-1}(T^{-1}(z))))))|
  double max_y_error = 0.0;  ///< |y - inverse(forward(y))|
  double max_y_relative = 0.0;
  bool all_finite = true;
  std::size_t fields = 0;
};

RoundtripReport roundtrip(const FittedModel& model, const Eigen::MatrixXd& Y);

}  // namespace sct
