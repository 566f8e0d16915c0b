#pragma once

// Missing-value imputation under a fitted model and cross-validated choice of
// the latent dimensionality.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mvad/dataset.hpp"
#include "mvad/inference.hpp"
#include "mvad/model.hpp"

namespace mvad {

struct ImputationResult {
  MultiViewDataset filled;  // missing cells replaced, mask all true
  /// Per view, N x M_d posterior predictive means (every cell, observed or not).
  std::vector<Eigen::MatrixXd> predictive_mean;
  /// Per view, N x M_d averages of 1 + w_m^T C w_m; multiply by 1/alpha for variance.
  std::vector<Eigen::MatrixXd> predictive_variance_scale;
};

/// Fills missing cells with W_d mu_{n, s_nd}, averaged over the trace's
/// recorded assignment states (which must be present).
[[nodiscard]] ImputationResult impute(const MultiViewDataset& data, const ProjectionSet& proj,
                                      const GibbsTrace& trace, const Hyperparameters& hyper);
/// Single-state variant.
[[nodiscard]] ImputationResult impute(const MultiViewDataset& data, const ProjectionSet& proj,
                                      const AssignmentState& state, const Hyperparameters& hyper);

struct HiddenCell {
  std::size_t instance = 0;
  std::size_t view = 0;
  std::size_t feature = 0;
  double value = 0.0;
};

struct Holdout {
  MultiViewDataset masked;
  std::vector<HiddenCell> hidden;
};

/// Hides round(fraction * observed) randomly chosen observed cells. Cells that
/// are already missing are never chosen.
[[nodiscard]] Holdout hide_cells(const MultiViewDataset& data, double fraction, Rng& rng);

/// Mean squared error of predictions (per-view matrices) over the hidden cells.
[[nodiscard]] double holdout_mse(const std::vector<Eigen::MatrixXd>& predictions,
                                 const std::vector<HiddenCell>& hidden);

/// Per-feature mean of observed cells (0 for a feature never observed),
/// broadcast to every row.
[[nodiscard]] std::vector<Eigen::MatrixXd> column_mean_predictions(const MultiViewDataset& data);

struct KSelection {
  int selected_k = 0;
  std::vector<int> grid;
  std::vector<double> mse;
};

struct KSelectionOptions {
  double holdout_fraction = 0.05;
  double tie_tolerance = 0.02;  // relative to the minimum MSE
  std::uint64_t holdout_seed = 1;
};

/// Smallest K on the grid whose held-out MSE lies within tie_tolerance of the best.
[[nodiscard]] int smallest_within_tolerance(const std::vector<int>& grid,
                                            const std::vector<double>& mse, double tie_tolerance);

[[nodiscard]] KSelection select_latent_dim(const MultiViewDataset& data, std::vector<int> grid,
                                           const Hyperparameters& hyper,
                                           const InferenceConfig& config,
                                           const KSelectionOptions& options = {});

}  // namespace mvad
