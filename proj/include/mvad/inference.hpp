#pragma once

// Stochastic EM: collapsed Gibbs resampling of view-to-latent assignments
// alternated with quasi-Newton maximization of the projections.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "mvad/dataset.hpp"
#include "mvad/lbfgs.hpp"
#include "mvad/model.hpp"

namespace mvad {

using Rng = std::mt19937_64;

struct InferenceConfig {
  int n_sweeps = 500;
  int burn_in = 100;
  int mstep_every = 1;
  int mstep_max_iters = 20;
  double mstep_grad_tol = 1e-5;
  /// Iteration cap of the M-step run on the initial all-joined state.
  int warm_start_iters = 100;
  std::uint64_t seed = 1;
  /// Standard deviation of the initial projection entries; <= 0 means 1/sqrt(K).
  double init_scale = 0.0;
  /// false pins every instance to one latent vector (PCCA mode).
  bool resample_assignments = true;
  bool random_scan = false;
  bool record_assignments = true;

  void validate() const;
  [[nodiscard]] double effective_init_scale(int k_latent) const;
};

struct TraceEntry {
  int sweep = 0;
  std::vector<int> latent_counts;  // J_n per instance
  double log_likelihood = 0.0;     // joint log p(X, S | W)
  std::vector<double> reconstruction_error;  // per instance, observed cells
  std::vector<std::vector<int>> assignments;  // empty unless recorded
};

struct GibbsTrace {
  int n_sweeps = 0;
  int burn_in = 0;
  std::size_t n_instances = 0;
  std::size_t n_views = 0;
  std::vector<TraceEntry> entries;  // retained sweeps only

  [[nodiscard]] std::size_t retained() const noexcept { return entries.size(); }
};

struct AnomalyScores {
  std::vector<double> v;
};

/// Fraction of retained sweeps in which each instance used more than one latent vector.
[[nodiscard]] AnomalyScores anomaly_scores(const GibbsTrace& trace);

/// Mean reconstruction error per instance across retained sweeps (PCCA baseline score).
[[nodiscard]] std::vector<double> reconstruction_scores(const GibbsTrace& trace);

/// Sum over views of ||x_nd - W_d mu_{n, s_nd}||^2 on observed cells.
[[nodiscard]] std::vector<double> reconstruction_errors(const MultiViewDataset& data,
                                                        const AssignmentState& state,
                                                        const ProjectionSet& proj,
                                                        const LatentStats& stats);

struct ResampleResult {
  std::size_t chosen = 0;
  /// Unnormalized log conditional per candidate: log prior ratio + log likelihood ratio.
  std::vector<double> log_weights;
  std::vector<double> log_prior;
  std::vector<double> log_likelihood_ratio;
};

/// Collapsed Gibbs sampler holding assignments and incrementally maintained
/// sufficient statistics for a fixed projection set.
class GibbsSampler {
public:
  GibbsSampler(const MultiViewDataset& data, const Hyperparameters& hyper, ProjectionSet proj,
               AssignmentState state);

  /// Resamples s_nd from its full conditional.
  ResampleResult resample(std::size_t n, std::size_t d, Rng& rng);
  /// Resamples every view, n-major and d-minor (or a random permutation when random_scan).
  void sweep(Rng& rng, bool random_scan = false);

  /// Replaces W and recomputes every statistic from scratch.
  void set_projection(ProjectionSet proj);

  [[nodiscard]] const AssignmentState& state() const noexcept { return state_; }
  [[nodiscard]] const ProjectionSet& projection() const noexcept { return proj_; }
  [[nodiscard]] const LatentStats& stats() const noexcept { return stats_; }
  [[nodiscard]] double joint_log_likelihood() const;

private:
  void detach(std::size_t n, std::size_t d);
  void attach(std::size_t n, std::size_t d, std::size_t j);
  void rebuild_block(std::size_t n, std::size_t j);
  void refresh_globals();
  void resync_quad();

  const MultiViewDataset* data_;
  Hyperparameters hyper_;
  ProjectionSet proj_;
  AssignmentState state_;
  ViewTermTable terms_;
  LatentStats stats_;
  std::vector<double> scratch_;
};

/// Gradient of the joint log-likelihood with respect to W_d.
[[nodiscard]] Eigen::MatrixXd mstep_gradient(const MultiViewDataset& data,
                                             const AssignmentState& state,
                                             const LatentStats& stats, const ProjectionSet& proj,
                                             const Hyperparameters& hyper, std::size_t d);

/// Joint log-likelihood and its gradient for every view at fixed assignments.
struct ObjectiveValue {
  double value = 0.0;
  std::vector<Eigen::MatrixXd> gradient;
};
[[nodiscard]] ObjectiveValue joint_objective(const MultiViewDataset& data,
                                             const AssignmentState& state,
                                             const ProjectionSet& proj,
                                             const Hyperparameters& hyper);

struct MStepResult {
  ProjectionSet proj;
  double value_before = 0.0;
  double value_after = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::iteration_limit;
};

/// Quasi-Newton ascent on vec(W) at fixed assignments. Never lowers the joint
/// log-likelihood; returns the incoming W if it cannot be evaluated.
[[nodiscard]] MStepResult mstep_optimize(const MultiViewDataset& data,
                                         const AssignmentState& state, const ProjectionSet& proj,
                                         const Hyperparameters& hyper, int max_iters,
                                         double grad_tol);

struct FitResult {
  ProjectionSet proj;
  AssignmentState state;
  GibbsTrace trace;
  double final_log_likelihood = 0.0;
};

/// Random projections with i.i.d. N(0, scale^2) entries.
[[nodiscard]] ProjectionSet random_projections(const MultiViewDataset& data, int k_latent,
                                               double scale, Rng& rng);

/// Full stochastic EM run from random projections and all-joined assignments.
[[nodiscard]] FitResult run_stochastic_em(const MultiViewDataset& data,
                                          const Hyperparameters& hyper,
                                          const InferenceConfig& config);

}  // namespace mvad
