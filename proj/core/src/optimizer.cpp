#include "sct/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <ceres/iteration_callback.h>

#include "sct/errors.hpp"

namespace sct::opt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double norm2(std::span<const double> g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

// Ceres minimizes; the objective is negated here.
class NegatedObjective final : public ceres::FirstOrderFunction {
 public:
  NegatedObjective(const Objective& f, int n) : f_(f), n_(n), scratch_(n) {}

  bool Evaluate(const double* x, double* cost, double* gradient) const override {
    try {
      std::span<const double> xs(x, n_);
      std::span<double> gs(gradient ? gradient : scratch_.data(), n_);
      const double v = f_(xs, gs);
      if (!std::isfinite(v)) return false;
      *cost = -v;
      if (gradient) {
        for (int i = 0; i < n_; ++i) {
          if (!std::isfinite(gradient[i])) return false;
          gradient[i] = -gradient[i];
        }
      }
      return true;
    } catch (const NumericalError&) {
      return false;
    }
  }
  int NumParameters() const override { return n_; }

 private:
  const Objective& f_;
  int n_;
  mutable std::vector<double> scratch_;
};

// Tracks the best-validation iterate and stops after `patience` misses.
class Monitor final : public ceres::IterationCallback {
 public:
  Monitor(const double* state, int n, const Validation* validation, int patience,
          const TraceSink& sink, std::vector<TraceRecord>& trace, Clock::time_point t0)
      : state_(state), n_(n), validation_(validation), patience_(patience), sink_(sink),
        trace_(trace), t0_(t0) {}

  ceres::CallbackReturnType operator()(const ceres::IterationSummary& s) override {
    TraceRecord r;
    r.iteration = s.iteration;
    r.objective = -s.cost;
    r.grad_norm = s.gradient_norm;
    r.wall_seconds = seconds_since(t0_);
    if (validation_) {
      r.has_validation = true;
      try {
        r.validation = (*validation_)(std::span<const double>(state_, n_));
      } catch (const NumericalError&) {
        r.validation = -std::numeric_limits<double>::infinity();
      }
      if (r.validation > best_value_ || best_.empty()) {
        best_value_ = r.validation;
        best_.assign(state_, state_ + n_);
        misses_ = 0;
      } else {
        ++misses_;
      }
    }
    trace_.push_back(r);
    if (sink_) sink_(r);
    if (validation_ && patience_ > 0 && misses_ >= patience_) {
      stopped_ = true;
      return ceres::SOLVER_TERMINATE_SUCCESSFULLY;
    }
    return ceres::SOLVER_CONTINUE;
  }

  const std::vector<double>& best() const { return best_; }
  bool stopped() const { return stopped_; }

 private:
  const double* state_;
  int n_;
  const Validation* validation_;
  int patience_;
  const TraceSink& sink_;
  std::vector<TraceRecord>& trace_;
  Clock::time_point t0_;
  std::vector<double> best_;
  double best_value_ = -std::numeric_limits<double>::infinity();
  int misses_ = 0;
  bool stopped_ = false;
};

OptimizeResult run_lbfgs(const Objective& f, std::vector<double> x, const OptimizerConfig& cfg,
                         const Validation* validation, const TraceSink& sink) {
  const int n = static_cast<int>(x.size());
  OptimizeResult res;
  const auto t0 = Clock::now();

  ceres::GradientProblem problem(new NegatedObjective(f, n));
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = cfg.max_iter;
  options.gradient_tolerance = cfg.grad_tol;
  options.function_tolerance = 1e-12;
  options.parameter_tolerance = 1e-12;
  options.logging_type = ceres::SILENT;
  options.update_state_every_iteration = true;
  Monitor monitor(x.data(), n, validation, cfg.patience, sink, res.trace, t0);
  options.callbacks.push_back(&monitor);

  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, x.data(), &summary);

  if (summary.termination_type == ceres::FAILURE && summary.iterations.size() <= 1) {
    std::ostringstream os;
    os << "optimizer failed at the initial point: " << summary.message;
    throw NumericalError(os.str());
  }
  if (validation && !monitor.best().empty()) x = monitor.best();
  res.early_stopped = monitor.stopped();
  res.converged = summary.termination_type == ceres::CONVERGENCE || res.early_stopped;
  res.iterations = static_cast<int>(summary.iterations.size()) - 1;
  res.message = summary.message;
  std::vector<double> g(x.size());
  res.objective = f(x, g);
  res.grad_norm = norm2(g);
  res.x = std::move(x);
  return res;
}

// Adam on the negated objective with a backtracking guard against
// infeasible steps.
OptimizeResult run_adam(const Objective& f, std::vector<double> x, const OptimizerConfig& cfg,
                        const Validation* validation, const TraceSink& sink) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::size_t n = x.size();
  OptimizeResult res;
  const auto t0 = Clock::now();
  std::vector<double> m(n, 0.0), v(n, 0.0), g(n), trial(n);
  double value = f(x, g);
  if (!std::isfinite(value)) throw NumericalError("optimizer: non-finite objective at the initial point");

  std::vector<double> best = x;
  double best_val = -std::numeric_limits<double>::infinity();
  int misses = 0;
  double lr = cfg.learning_rate;
  int it = 0;
  for (; it < cfg.max_iter; ++it) {
    const double gn = norm2(g);
    TraceRecord r{it, value, gn, seconds_since(t0), 0.0, false};
    if (validation) {
      r.has_validation = true;
      r.validation = (*validation)(x);
      if (r.validation > best_val) {
        best_val = r.validation;
        best = x;
        misses = 0;
      } else {
        ++misses;
      }
    }
    res.trace.push_back(r);
    if (sink) sink(r);
    if (gn < cfg.grad_tol) {
      res.converged = true;
      break;
    }
    if (validation && cfg.patience > 0 && misses >= cfg.patience) {
      res.early_stopped = res.converged = true;
      break;
    }
    const double c1 = 1.0 - std::pow(b1, it + 1), c2 = 1.0 - std::pow(b2, it + 1);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    }
    bool ok = false;
    for (int tries = 0; tries < 30 && !ok; ++tries) {
      for (std::size_t i = 0; i < n; ++i) {
        trial[i] = x[i] + lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
      std::vector<double> gt(n);
      double vt;
      try {
        vt = f(trial, gt);
      } catch (const NumericalError&) {
        vt = std::numeric_limits<double>::quiet_NaN();
      }
      if (std::isfinite(vt)) {
        ok = true;
        x = trial;
        value = vt;
        g = std::move(gt);
      } else {
        lr *= 0.5;
      }
    }
    if (!ok) throw NumericalError("optimizer: no feasible step found");
  }
  if (validation) x = best;
  res.iterations = it;
  res.message = res.converged ? "converged" : "iteration limit reached";
  res.objective = f(x, g);
  res.grad_norm = norm2(g);
  res.x = std::move(x);
  return res;
}

}  // namespace

Algorithm parse_algorithm(std::string_view name) {
  if (name == "quasi-newton" || name == "lbfgs") return Algorithm::quasi_newton;
  if (name == "first-order-adaptive" || name == "adam") return Algorithm::first_order_adaptive;
  throw DomainError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view algorithm_name(Algorithm a) {
  return a == Algorithm::quasi_newton ? "quasi-newton" : "first-order-adaptive";
}

std::string format_trace(std::string_view stage, const TraceRecord& r) {
  std::ostringstream os;
  os.precision(12);
  os << "stage=" << stage << " iteration=" << r.iteration << " objective=" << r.objective
     << " grad_norm=" << r.grad_norm << " wall=" << r.wall_seconds;
  if (r.has_validation) os << " validation=" << r.validation;
  return os.str();
}

OptimizeResult maximize(const Objective& f, std::vector<double> x0, const OptimizerConfig& config,
                        const Validation* validation, const TraceSink& sink) {
  if (x0.empty()) {
    OptimizeResult r;
    std::vector<double> g;
    r.objective = f(x0, g);
    r.converged = true;
    r.message = "no free parameters";
    return r;
  }
  if (!(config.grad_tol > 0.0) || config.max_iter < 1) {
    throw DomainError("optimizer needs grad_tol > 0 and max_iter >= 1");
  }
  {
    std::vector<double> g(x0.size());
    const double v0 = f(x0, g);
    if (!std::isfinite(v0)) throw NumericalError("non-finite objective at the initial point");
  }
  if (config.algorithm == Algorithm::quasi_newton) return run_lbfgs(f, std::move(x0), config, validation, sink);
  return run_adam(f, std::move(x0), config, validation, sink);
}

}  // namespace sct::opt
