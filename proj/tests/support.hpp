#pragma once

// Shared fixtures and independent reference computations for the tests.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mvad/dataset.hpp"
#include "mvad/inference.hpp"
#include "mvad/model.hpp"

namespace mvad::testing {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

/// Random dataset; each cell is missing with probability missing_prob, but
/// every view keeps at least one observed cell.
inline MultiViewDataset random_dataset(std::size_t n, const std::vector<std::size_t>& dims,
                                       Rng& rng, double missing_prob = 0.0) {
  std::bernoulli_distribution drop(missing_prob);
  std::vector<ViewBlock> views;
  for (auto m : dims) {
    ViewBlock v = ViewBlock::fully_observed(
        gaussian(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m), rng));
    if (missing_prob > 0.0) {
      for (Eigen::Index r = 0; r < v.values.rows(); ++r)
        for (Eigen::Index c = 0; c < v.values.cols(); ++c)
          if (drop(rng)) {
            v.observed(r, c) = false;
            v.values(r, c) = std::nan("");
          }
      if (!v.observed.any()) {
        v.observed(0, 0) = true;
        v.values(0, 0) = 0.5;
      }
    }
    views.push_back(std::move(v));
  }
  return MultiViewDataset(std::move(views));
}

inline ProjectionSet random_projection(const MultiViewDataset& data, int k, Rng& rng,
                                       double sd = 1.0) {
  ProjectionSet p;
  for (std::size_t d = 0; d < data.n_views(); ++d)
    p.weights.push_back(gaussian(static_cast<Eigen::Index>(data.view_dim(d)), k, rng, sd));
  return p;
}

inline AssignmentState random_state(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<std::vector<int>> labels(n, std::vector<int>(d));
  std::uniform_int_distribution<int> pick(0, static_cast<int>(d) - 1);
  for (auto& row : labels)
    for (auto& l : row) l = pick(rng);
  return AssignmentState::from_labels(labels);
}

/// All set partitions of {0..d-1} as restricted growth strings.
inline std::vector<std::vector<int>> set_partitions(int d) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(d), 0);
  auto rec = [&](auto&& self, int i, int max_label) -> void {
    if (i == d) {
      out.push_back(cur);
      return;
    }
    for (int l = 0; l <= max_label + 1; ++l) {
      cur[static_cast<std::size_t>(i)] = l;
      self(self, i + 1, std::max(max_label, l));
    }
  };
  if (d == 0) return {{}};
  cur[0] = 0;
  rec(rec, 1, 0);
  return out;
}

/// Sequential-seating probability of one instance's labels (views seated in order).
inline double crp_sequential_log_prob(const std::vector<int>& raw, double gamma) {
  std::vector<int> labels(raw.size());
  std::vector<int> seen;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto it = std::find(seen.begin(), seen.end(), raw[i]);
    labels[i] = static_cast<int>(it - seen.begin());
    if (it == seen.end()) seen.push_back(raw[i]);
  }
  std::vector<int> counts;
  double lp = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    const double denom = static_cast<double>(i) + gamma;
    if (l >= counts.size()) {
      lp += std::log(gamma / denom);
      counts.resize(l + 1, 0);
    } else {
      lp += std::log(counts[l] / denom);
    }
    ++counts[l];
  }
  return lp;
}

/// Collapsed log p(X | S, W) integrating z and alpha directly: within a block
/// x ~ N(0, alpha^{-1} (I + W W^T / r)) on observed cells, alpha ~ Gamma(a, b).
inline double dense_marginal(const MultiViewDataset& data, const AssignmentState& state,
                             const ProjectionSet& proj, const Hyperparameters& h) {
  double log_det = 0.0;
  double mahal = 0.0;
  double cells = 0.0;
  for (std::size_t n = 0; n < data.n_instances(); ++n) {
    for (std::size_t j = 0; j < state.n_blocks(n); ++j) {
      std::vector<Eigen::VectorXd> rows;
      std::vector<double> xs;
      for (std::size_t d = 0; d < data.n_views(); ++d) {
        if (static_cast<std::size_t>(state.block_of(n, d)) != j) continue;
        const auto& v = data.view(d);
        for (Eigen::Index m = 0; m < v.values.cols(); ++m)
          if (v.observed(static_cast<Eigen::Index>(n), m)) {
            rows.push_back(proj.weights[d].row(m).transpose());
            xs.push_back(v.values(static_cast<Eigen::Index>(n), m));
          }
      }
      if (rows.empty()) continue;
      const auto o = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd w(o, h.k_latent);
      Eigen::VectorXd x(o);
      for (Eigen::Index i = 0; i < o; ++i) {
        w.row(i) = rows[static_cast<std::size_t>(i)].transpose();
        x(i) = xs[static_cast<std::size_t>(i)];
      }
      const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(o, o) + w * w.transpose() / h.r;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
      log_det += ldlt.vectorD().array().log().sum();
      mahal += x.dot(ldlt.solve(x));
      cells += static_cast<double>(o);
    }
  }
  const double a1 = h.a + 0.5 * cells;
  const double b1 = h.b + 0.5 * mahal;
  return -0.5 * cells * std::log(2.0 * std::numbers::pi) - 0.5 * log_det + h.a * std::log(h.b) -
         a1 * std::log(b1) + std::lgamma(a1) - std::lgamma(h.a);
}

inline double dense_joint(const MultiViewDataset& data, const AssignmentState& state,
                          const ProjectionSet& proj, const Hyperparameters& h) {
  double prior = 0.0;
  for (std::size_t n = 0; n < state.n_instances(); ++n)
    prior += crp_sequential_log_prob(state.labels(n), h.gamma);
  return prior + dense_marginal(data, state, proj, h);
}

/// Copy of data with every cell of x_nd marked missing.
inline MultiViewDataset without_row(const MultiViewDataset& data, std::size_t n, std::size_t d) {
  std::vector<ViewBlock> views = data.views();
  views[d].observed.row(static_cast<Eigen::Index>(n)).setConstant(false);
  return MultiViewDataset(std::move(views), data.labels());
}

inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-12);
}

}  // namespace mvad::testing
