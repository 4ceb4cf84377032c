#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sct::opt {

enum class Algorithm { quasi_newton, first_order_adaptive };

Algorithm parse_algorithm(std::string_view name);
std::string_view algorithm_name(Algorithm a);

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::quasi_newton;
  int max_iter = 500;
  double grad_tol = 1e-5;
  /// Evaluations without validation improvement before stopping; 0 disables.
  int patience = 25;
  std::uint64_t seed = 1;
  double learning_rate = 0.02;  ///< first-order-adaptive only
};

struct TraceRecord {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
  double validation = 0.0;
  bool has_validation = false;
};

/// Line-delimited key=value rendering of a trace record.
std::string format_trace(std::string_view stage, const TraceRecord& r);

/// Returns the value to maximize and writes its gradient. May throw
/// NumericalError; the optimizer then treats the point as infeasible.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;
/// Held-out criterion, higher is better.
using Validation = std::function<double(std::span<const double> x)>;
using TraceSink = std::function<void(const TraceRecord&)>;

struct OptimizeResult {
  std::vector<double> x;
  double objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool early_stopped = false;
  std::string message;
  std::vector<TraceRecord> trace;
};

/// Maximizes `f` from x0. With a validation criterion, the parameters with
/// the best validation value are returned and the run stops once `patience`
/// iterations pass without improvement.
OptimizeResult maximize(const Objective& f, std::vector<double> x0, const OptimizerConfig& config,
                        const Validation* validation = nullptr, const TraceSink& sink = {});

}  // namespace sct::opt
