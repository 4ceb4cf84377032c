#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "sct/marginal.hpp"
#include "sct/optimizer.hpp"
#include "sct/priors.hpp"

namespace sct {

/// Model and fitting settings. The file form is flat `key = value` lines
/// with `#` comments; unknown keys are rejected.
struct ModelConfig {
  marginal::FamilyKind family = marginal::FamilyKind::skew_t3;
  bool use_h = true;
  int D = 40;
  double a = -4.0;
  double b = 4.0;
  std::size_t M = 64;
  double g = 4.0;
  double epsilon = 0.01;
  std::size_t max_conditioning = 30;
  priors::KernelKind kernel_zeta = priors::KernelKind::matern32;
  priors::KernelKind kernel_beta = priors::KernelKind::matern32;
  opt::OptimizerConfig optimizer{};
  opt::OptimizerConfig tm_optimizer{opt::Algorithm::quasi_newton, 200, 1e-6, 0, 1, 0.02};
  double validation_fraction = 0.2;
  bool standardize = true;

  /// Throws DomainError for out-of-range values.
  void validate() const;
};

ModelConfig parse_config(std::string_view text);
ModelConfig load_config(const std::string& path);
/// Canonical text form; parse_config(render_config(c)) reproduces c.
std::string render_config(const ModelConfig& c);
/// Every key with its value, default and meaning.
std::string explain_config(const ModelConfig& c);

}  // namespace sct
