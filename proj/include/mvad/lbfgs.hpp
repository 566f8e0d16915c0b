#pragma once

#include <Eigen/Core>
#include <functional>

namespace mvad {

struct LbfgsOptions {
  int max_iterations = 20;
  double grad_tolerance = 1e-5;
  /// Stops once an accepted step improves f by less than this times max(1, |f|).
  double value_tolerance = 1e-12;
  int history = 6;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
};

enum class LbfgsStatus { converged, stalled, iteration_limit, line_search_failed, evaluation_failed };

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double initial_value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::iteration_limit;
};

/// Objective returning f(x) and writing its gradient. May throw; a throwing or
/// non-finite evaluation counts as a failed trial point.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Limited-memory BFGS ascent with a backtracking sufficient-increase line
/// search. The returned value is never below the value at x0; if x0 itself
/// cannot be evaluated, x0 is returned with status evaluation_failed.
[[nodiscard]] LbfgsResult lbfgs_maximize(const Objective& objective, const Eigen::VectorXd& x0,
                                         const LbfgsOptions& options = {});

}  // namespace mvad
