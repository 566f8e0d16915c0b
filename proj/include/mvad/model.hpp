#pragma once

// Collapsed probability computations for the multi-view latent variable model.
//
// Each instance n owns an unbounded set of latent vectors z_nj; view d of
// instance n is generated from latent vector s_nd through the projection W_d
// with spherical noise of precision alpha. Mixture weights (Dirichlet process),
// latent vectors and alpha are integrated out, leaving closed forms that depend
// only on the assignment partition and on W.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mvad/dataset.hpp"

namespace mvad {

struct Hyperparameters {
  double a = 1.0;      // Gamma shape of the precision prior
  double b = 1.0;      // Gamma rate of the precision prior
  double r = 1.0;      // latent precision relative to observation precision
  double gamma = 1.0;  // Dirichlet process concentration
  int k_latent = 5;

  void validate() const;
};

/// Per-view projections W_d, each M_d x K.
struct ProjectionSet {
  std::vector<Eigen::MatrixXd> weights;

  [[nodiscard]] std::size_t n_views() const noexcept { return weights.size(); }
  [[nodiscard]] Eigen::Index k_latent() const {
    return weights.empty() ? 0 : weights.front().cols();
  }
  /// Throws unless shapes match the dataset and every entry is finite.
  void validate(const MultiViewDataset& data, int k_latent) const;

  [[nodiscard]] Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  [[nodiscard]] std::size_t parameter_count() const noexcept;
};

/// Latent-vector assignments s_nd with compact per-instance block labels.
///
/// Labels are 0-based internally; block j of instance n holds count(n, j)
/// views and every block in [0, n_blocks(n)) is nonempty.
class AssignmentState {
public:
  AssignmentState() = default;

  /// Every view of every instance in one block.
  static AssignmentState single_block(std::size_t n_instances, std::size_t n_views);
  /// Every view in its own block.
  static AssignmentState all_distinct(std::size_t n_instances, std::size_t n_views);
  /// Arbitrary labels; relabelled to compact form by order of first appearance.
  static AssignmentState from_labels(const std::vector<std::vector<int>>& labels);

  [[nodiscard]] std::size_t n_instances() const noexcept { return labels_.size(); }
  [[nodiscard]] std::size_t n_views() const noexcept { return n_views_; }
  [[nodiscard]] int block_of(std::size_t n, std::size_t d) const { return labels_[n][d]; }
  [[nodiscard]] std::size_t n_blocks(std::size_t n) const { return counts_[n].size(); }
  [[nodiscard]] int count(std::size_t n, std::size_t j) const { return counts_[n][j]; }
  [[nodiscard]] const std::vector<int>& labels(std::size_t n) const { return labels_[n]; }
  [[nodiscard]] std::size_t total_blocks() const noexcept;

  /// Removes view (n, d) from its block. Returns the removed block index when
  /// the block became empty (higher labels shift down by one), or -1.
  int detach(std::size_t n, std::size_t d);
  /// Assigns a detached view to block j; j == n_blocks(n) opens a new block.
  void attach(std::size_t n, std::size_t d, std::size_t j);

  /// Views of instance n assigned to block j, ascending.
  [[nodiscard]] std::vector<std::size_t> members(std::size_t n, std::size_t j) const;

  /// Throws std::logic_error if the compactness or count invariants fail.
  void check() const;

  friend bool operator==(const AssignmentState&, const AssignmentState&) = default;

private:
  std::size_t n_views_ = 0;
  std::vector<std::vector<int>> labels_;
  std::vector<std::vector<int>> counts_;
};

/// Per-(n, d) terms of the collapsed likelihood under one ProjectionSet, each
/// restricted to the observed cells of x_nd: W_O^T W_O, W_O^T x_O, x_O^T x_O.
class ViewTermTable {
public:
  ViewTermTable() = default;
  ViewTermTable(const MultiViewDataset& data, const ProjectionSet& proj);

  [[nodiscard]] const Eigen::MatrixXd& gram(std::size_t n, std::size_t d) const {
    const auto& own = partial_gram_[index(n, d)];
    return own.size() == 0 ? full_gram_[d] : own;
  }
  [[nodiscard]] auto projection(std::size_t n, std::size_t d) const {
    return projections_[d].row(static_cast<Eigen::Index>(n)).transpose();
  }
  [[nodiscard]] double sum_sq(std::size_t n, std::size_t d) const { return sum_sq_[index(n, d)]; }
  [[nodiscard]] std::size_t observed(std::size_t n, std::size_t d) const {
    return observed_[index(n, d)];
  }
  [[nodiscard]] int k_latent() const noexcept { return k_latent_; }

private:
  [[nodiscard]] std::size_t index(std::size_t n, std::size_t d) const { return n * n_views_ + d; }

  std::size_t n_views_ = 0;
  int k_latent_ = 0;
  std::vector<Eigen::MatrixXd> full_gram_;     // per view, all rows
  std::vector<Eigen::MatrixXd> projections_;   // per view, N x K
  std::vector<Eigen::MatrixXd> partial_gram_;  // empty for complete rows
  std::vector<double> sum_sq_;
  std::vector<std::size_t> observed_;
};

/// Posterior of one latent vector z_nj: precision C^{-1} (up to alpha),
/// accumulated projection h = sum W^T x, mean mu = C h.
struct BlockStats {
  Eigen::MatrixXd precision;
  Eigen::VectorXd projection_sum;
  Eigen::VectorXd mean;
  Eigen::LLT<Eigen::MatrixXd> chol;
  double quad = 0.0;               // mu^T C^{-1} mu = h^T mu
  double log_det_precision = 0.0;  // log |C^{-1}|

  /// Factorizes precision and derives mean, quad and log-determinant.
  /// Throws NumericalError when the precision is not positive definite.
  static BlockStats from(Eigen::MatrixXd precision, Eigen::VectorXd projection_sum);
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GammaParams {
  double shape = 0.0;
  double rate = 0.0;
  [[nodiscard]] double mean() const noexcept { return shape / rate; }
};

struct LatentStats {
  std::vector<std::vector<BlockStats>> blocks;  // [n][j]
  double a_prime = 0.0;
  double b_prime = 0.0;
  double observed_cells = 0.0;
  double sum_sq = 0.0;
  double sum_quad = 0.0;
  std::size_t total_blocks = 0;
  int k_latent = 0;
};

/// log p(S | gamma), summed over instances.
[[nodiscard]] double partition_log_prior(const AssignmentState& state, double gamma);

/// Builds a block's statistics from the views it holds, summed in the given order.
[[nodiscard]] BlockStats block_from_views(const ViewTermTable& terms, std::size_t n,
                                          const std::vector<std::size_t>& views, double r,
                                          int k_latent);

[[nodiscard]] LatentStats compute_latent_stats(const MultiViewDataset& data,
                                               const AssignmentState& state,
                                               const ProjectionSet& proj,
                                               const Hyperparameters& hyper);
[[nodiscard]] LatentStats compute_latent_stats(const MultiViewDataset& data,
                                               const AssignmentState& state,
                                               const ViewTermTable& terms,
                                               const Hyperparameters& hyper);

/// log p(X | S, W, a, b, r) from already computed statistics.
[[nodiscard]] double marginal_log_likelihood(const LatentStats& stats, const Hyperparameters& hyper);
[[nodiscard]] double marginal_log_likelihood(const MultiViewDataset& data,
                                             const AssignmentState& state,
                                             const ProjectionSet& proj,
                                             const Hyperparameters& hyper);

/// log p(X, S | W, a, b, r, gamma).
[[nodiscard]] double joint_log_likelihood(const MultiViewDataset& data,
                                          const AssignmentState& state,
                                          const ProjectionSet& proj,
                                          const Hyperparameters& hyper);

/// Gamma(a', b') posterior of the noise precision.
[[nodiscard]] GammaParams alpha_posterior(const LatentStats& stats);

struct LatentPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance_scale;  // C_nj; multiply by 1/alpha
};

/// Posterior of z_nj. Throws std::out_of_range for an unoccupied (n, j).
[[nodiscard]] LatentPosterior latent_posterior(const LatentStats& stats, std::size_t n,
                                               std::size_t j);

}  // namespace mvad
