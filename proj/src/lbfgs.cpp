#include "mvad/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <vector>

namespace mvad {
namespace {

// Internally minimizes phi = -f.
bool evaluate(const Objective& objective, const Eigen::VectorXd& x, double& phi,
              Eigen::VectorXd& grad) {
  try {
    const double f = objective(x, grad);
    if (!std::isfinite(f) || !grad.allFinite()) return false;
    phi = -f;
    grad = -grad;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

Eigen::VectorXd two_loop(const std::deque<CurvaturePair>& history, const Eigen::VectorXd& grad) {
  Eigen::VectorXd q = grad;
  std::vector<double> alpha(history.size());
  for (std::size_t i = history.size(); i-- > 0;) {
    alpha[i] = history[i].rho * history[i].s.dot(q);
    q -= alpha[i] * history[i].y;
  }
  const auto& last = history.back();
  q *= last.s.dot(last.y) / last.y.squaredNorm();
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double beta = history[i].rho * history[i].y.dot(q);
    q += (alpha[i] - beta) * history[i].s;
  }
  return -q;
}

}  // namespace

LbfgsResult lbfgs_maximize(const Objective& objective, const Eigen::VectorXd& x0,
                           const LbfgsOptions& options) {
  LbfgsResult result;
  result.x = x0;
  Eigen::VectorXd grad(x0.size());
  double phi = 0.0;
  ++result.evaluations;
  if (!evaluate(objective, x0, phi, grad)) {
    result.status = LbfgsStatus::evaluation_failed;
    result.value = -std::numeric_limits<double>::infinity();
    result.initial_value = result.value;
    result.gradient = Eigen::VectorXd::Zero(x0.size());
    return result;
  }
  result.initial_value = -phi;

  Eigen::VectorXd x = x0;
  std::deque<CurvaturePair> history;
  Eigen::VectorXd trial_grad(x0.size());
  result.status = LbfgsStatus::iteration_limit;

  while (true) {
    if (grad.norm() <= options.grad_tolerance) {
      result.status = LbfgsStatus::converged;
      break;
    }
    if (result.iterations >= options.max_iterations) break;

    Eigen::VectorXd direction;
    double step = 1.0;
    if (history.empty()) {
      direction = -grad;
      step = 1.0 / std::max(1.0, grad.norm());
    } else {
      direction = two_loop(history, grad);
    }
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      // Lost descent; restart from steepest descent.
      history.clear();
      direction = -grad;
      step = 1.0 / std::max(1.0, grad.norm());
      slope = grad.dot(direction);
    }

    bool accepted = false;
    double trial_phi = 0.0;
    Eigen::VectorXd trial_x;
    for (int k = 0; k < options.max_backtracks; ++k) {
      trial_x = x + step * direction;
      ++result.evaluations;
      if (evaluate(objective, trial_x, trial_phi, trial_grad) &&
          trial_phi <= phi + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= options.backtrack;
    }
    if (!accepted) {
      result.status = LbfgsStatus::line_search_failed;
      break;
    }

    CurvaturePair pair{trial_x - x, trial_grad - grad, 0.0};
    const double sy = pair.s.dot(pair.y);
    if (sy > 1e-12 * pair.s.norm() * pair.y.norm()) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (static_cast<int>(history.size()) > options.history) history.pop_front();
    }
    const double gain = phi - trial_phi;
    x = std::move(trial_x);
    phi = trial_phi;
    grad = trial_grad;
    ++result.iterations;
    if (gain <= options.value_tolerance * std::max(1.0, std::abs(phi))) {
      result.status = LbfgsStatus::stalled;
      break;
    }
  }

  result.x = std::move(x);
  result.value = -phi;
  result.gradient = -grad;
  return result;
}

}  // namespace mvad
