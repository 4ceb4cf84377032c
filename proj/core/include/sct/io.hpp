#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "sct/geometry.hpp"
#include "sct/model.hpp"

namespace sct::io {

inline constexpr std::uint32_t kEnsembleVersion = 1;
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::uint32_t kNoiseVersion = 1;

/// "SCTE" | version u32 | L u64 | N u64 | metric u8 | coords L x 2 f64 | values N x L f64,
/// all little-endian, rows are replicates.
void write_ensemble(const std::string& path, const Ensemble& e);
Ensemble read_ensemble(const std::string& path);

/// "SCTM" | version u32 | config text | locations | standardization |
/// stage-1 parameters | map hyperparameters, cap and pseudo-data.
void write_model(const std::string& path, const FittedModel& m);
FittedModel read_model(const std::string& path);

/// "SCTN" | version u32 | count u64 | L u64 | values count x L f64.
void write_noise(const std::string& path, const Eigen::MatrixXd& noise);
Eigen::MatrixXd read_noise(const std::string& path);

struct CsvOptions {
  geo::Metric metric = geo::Metric::chordal_sphere;
  bool collapse_poles = true;
};

/// Columns lon, lat, then one column per replicate, with a header row.
/// Repeated pole rows are collapsed to the first one.
Ensemble ingest_csv(const std::string& path, const CsvOptions& options = {});

}  // namespace sct::io
