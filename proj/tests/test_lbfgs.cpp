#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "mvad/lbfgs.hpp"

using namespace mvad;

TEST_CASE("maximizes a concave quadratic") {
  Eigen::MatrixXd a(3, 3);
  a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const Eigen::Vector3d c(1.0, -2.0, 0.5);
  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = c - a * x;
    return c.dot(x) - 0.5 * x.dot(a * x);
  };
  LbfgsOptions opt;
  opt.max_iterations = 100;
  opt.grad_tolerance = 1e-7;
  opt.value_tolerance = 0.0;
  const auto res = lbfgs_maximize(f, Eigen::VectorXd::Zero(3), opt);
  CHECK(res.status == LbfgsStatus::converged);
  CHECK(res.iterations < 20);
  const Eigen::Vector3d want = a.ldlt().solve(c);
  CHECK((res.x - want).norm() < 1e-7);
  CHECK(res.value >= res.initial_value);
}

TEST_CASE("maximizes the negated Rosenbrock function") {
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double u = 1.0 - x(0), v = x(1) - x(0) * x(0);
    g.resize(2);
    g(0) = 2.0 * u + 400.0 * x(0) * v;
    g(1) = -200.0 * v;
    return -(u * u + 100.0 * v * v);
  };
  LbfgsOptions opt;
  opt.max_iterations = 500;
  opt.grad_tolerance = 1e-8;
  const auto res = lbfgs_maximize(f, Eigen::Vector2d(-1.2, 1.0), opt);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(res.x(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("value never decreases, even with an iteration cap of one") {
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -4.0 * x.array().cube().matrix();
    return -x.array().pow(4).sum();
  };
  for (int iters : {1, 2, 5}) {
    LbfgsOptions opt;
    opt.max_iterations = iters;
    const auto res = lbfgs_maximize(f, Eigen::Vector3d(3.0, -2.0, 1.0), opt);
    CHECK(res.value >= res.initial_value);
    CHECK(res.iterations <= iters);
  }
}

TEST_CASE("throwing and non-finite trial points are rejected") {
  // Defined only on x < 1; the unit first step from 0 overshoots.
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    if (x(0) >= 1.0) throw std::runtime_error("outside domain");
    g.resize(1);
    g(0) = 1.0 / (1.0 - x(0)) - 10.0 * x(0);
    return -std::log(1.0 - x(0)) - 5.0 * x(0) * x(0);
  };
  const auto res = lbfgs_maximize(f, Eigen::VectorXd::Zero(1));
  CHECK(res.value >= res.initial_value);
  CHECK(res.x(0) < 1.0);

  const Objective nan_far = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -x;
    if (x.norm() > 5.0) return std::numeric_limits<double>::quiet_NaN();
    return -0.5 * x.squaredNorm();
  };
  const auto r2 = lbfgs_maximize(nan_far, Eigen::Vector2d(3.0, 4.0));
  CHECK(r2.value >= r2.initial_value);
}

TEST_CASE("an unevaluable start is returned unchanged") {
  const Objective f = [](const Eigen::VectorXd&, Eigen::VectorXd&) -> double {
    throw std::runtime_error("broken");
  };
  const Eigen::Vector2d x0(1.0, 2.0);
  const auto res = lbfgs_maximize(f, x0);
  CHECK(res.status == LbfgsStatus::evaluation_failed);
  CHECK(res.x == x0);
}

TEST_CASE("stationary start converges immediately") {
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -x;
    return -0.5 * x.squaredNorm();
  };
  const auto res = lbfgs_maximize(f, Eigen::VectorXd::Zero(4));
  CHECK(res.status == LbfgsStatus::converged);
  CHECK(res.iterations == 0);
}

TEST_CASE("stops once accepted steps stop improving the value") {
  // Gradient tolerance below what the value can resolve.
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -x;
    return 1e6 - 0.5 * x.squaredNorm();
  };
  LbfgsOptions opt;
  opt.grad_tolerance = 1e-300;
  opt.max_iterations = 1000;
  opt.value_tolerance = 1e-12;
  const auto res = lbfgs_maximize(f, Eigen::Vector2d(1.0, -2.0), opt);
  CHECK(res.status == LbfgsStatus::stalled);
  CHECK(res.iterations < 1000);
  CHECK(res.value >= res.initial_value);
}
