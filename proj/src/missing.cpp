#include "mvad/missing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>

namespace mvad {
namespace {

void require_identifiable(const MultiViewDataset& data) {
  if (data.n_instances() == 0) return;
  for (std::size_t d = 0; d < data.n_views(); ++d)
    if (!data.view(d).observed.any())
      throw std::invalid_argument("view " + std::to_string(d) +
                                  " has no observed cells; its projection is unidentifiable");
}

struct Accumulator {
  std::vector<Eigen::MatrixXd> mean;
  std::vector<Eigen::MatrixXd> variance;

  explicit Accumulator(const MultiViewDataset& data) {
    for (const auto& v : data.views()) {
      mean.push_back(Eigen::MatrixXd::Zero(v.values.rows(), v.values.cols()));
      variance.push_back(Eigen::MatrixXd::Zero(v.values.rows(), v.values.cols()));
    }
  }

  void add(const MultiViewDataset& data, const AssignmentState& state, const ProjectionSet& proj,
           const LatentStats& stats) {
    for (std::size_t n = 0; n < data.n_instances(); ++n) {
      const auto row = static_cast<Eigen::Index>(n);
      for (std::size_t d = 0; d < data.n_views(); ++d) {
        const auto& blk = stats.blocks[n][state.block_of(n, d)];
        const auto& w = proj.weights[d];
        mean[d].row(row) += (w * blk.mean).transpose();
        // diag(W C W^T) through the Cholesky factor of C^{-1}.
        const Eigen::MatrixXd half = blk.chol.matrixL().solve(w.transpose());
        variance[d].row(row) += (1.0 + half.colwise().squaredNorm().array()).matrix();
      }
    }
  }

  ImputationResult finish(const MultiViewDataset& data, double count) {
    ImputationResult out;
    std::vector<ViewBlock> views;
    for (std::size_t d = 0; d < data.n_views(); ++d) {
      mean[d] /= count;
      variance[d] /= count;
      const auto& src = data.view(d);
      ViewBlock filled;
      filled.values = src.values;
      filled.observed = Mask::Constant(src.values.rows(), src.values.cols(), true);
      for (Eigen::Index n = 0; n < src.values.rows(); ++n)
        for (Eigen::Index m = 0; m < src.values.cols(); ++m)
          if (!src.observed(n, m)) filled.values(n, m) = mean[d](n, m);
      views.push_back(std::move(filled));
    }
    out.filled = MultiViewDataset(std::move(views), data.labels());
    out.predictive_mean = std::move(mean);
    out.predictive_variance_scale = std::move(variance);
    return out;
  }
};

}  // namespace

ImputationResult impute(const MultiViewDataset& data, const ProjectionSet& proj,
                        const GibbsTrace& trace, const Hyperparameters& hyper) {
  require_identifiable(data);
  proj.validate(data, hyper.k_latent);
  if (trace.entries.empty()) throw std::invalid_argument("trace has no retained sweeps");
  const ViewTermTable terms(data, proj);
  Accumulator acc(data);
  for (const auto& entry : trace.entries) {
    if (entry.assignments.size() != data.n_instances())
      throw std::invalid_argument("trace entry lacks recorded assignments");
    const auto state = AssignmentState::from_labels(entry.assignments);
    acc.add(data, state, proj, compute_latent_stats(data, state, terms, hyper));
  }
  return acc.finish(data, static_cast<double>(trace.entries.size()));
}

ImputationResult impute(const MultiViewDataset& data, const ProjectionSet& proj,
                        const AssignmentState& state, const Hyperparameters& hyper) {
  require_identifiable(data);
  Accumulator acc(data);
  acc.add(data, state, proj, compute_latent_stats(data, state, proj, hyper));
  return acc.finish(data, 1.0);
}

Holdout hide_cells(const MultiViewDataset& data, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw std::invalid_argument("holdout fraction must lie in [0, 1)");
  std::vector<HiddenCell> candidates;
  for (std::size_t n = 0; n < data.n_instances(); ++n)
    for (std::size_t d = 0; d < data.n_views(); ++d) {
      const auto& v = data.view(d);
      for (Eigen::Index m = 0; m < v.values.cols(); ++m)
        if (v.observed(static_cast<Eigen::Index>(n), m))
          candidates.push_back({n, d, static_cast<std::size_t>(m),
                                v.values(static_cast<Eigen::Index>(n), m)});
    }
  const auto count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(candidates.size())));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end(), [](const HiddenCell& x, const HiddenCell& y) {
    return std::tie(x.instance, x.view, x.feature) < std::tie(y.instance, y.view, y.feature);
  });

  std::vector<ViewBlock> views = data.views();
  for (const auto& c : candidates) {
    const auto n = static_cast<Eigen::Index>(c.instance);
    const auto m = static_cast<Eigen::Index>(c.feature);
    views[c.view].observed(n, m) = false;
    views[c.view].values(n, m) = std::numeric_limits<double>::quiet_NaN();
  }
  return {MultiViewDataset(std::move(views), data.labels()), std::move(candidates)};
}

double holdout_mse(const std::vector<Eigen::MatrixXd>& predictions,
                   const std::vector<HiddenCell>& hidden) {
  if (hidden.empty()) throw std::invalid_argument("no hidden cells to score");
  double total = 0.0;
  for (const auto& c : hidden) {
    const double diff = predictions.at(c.view)(static_cast<Eigen::Index>(c.instance),
                                               static_cast<Eigen::Index>(c.feature)) -
                        c.value;
    total += diff * diff;
  }
  return total / static_cast<double>(hidden.size());
}

std::vector<Eigen::MatrixXd> column_mean_predictions(const MultiViewDataset& data) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& v : data.views()) {
    Eigen::MatrixXd pred(v.values.rows(), v.values.cols());
    for (Eigen::Index m = 0; m < v.values.cols(); ++m) {
      double sum = 0.0;
      double count = 0.0;
      for (Eigen::Index n = 0; n < v.values.rows(); ++n)
        if (v.observed(n, m)) {
          sum += v.values(n, m);
          count += 1.0;
        }
      pred.col(m).setConstant(count > 0.0 ? sum / count : 0.0);
    }
    out.push_back(std::move(pred));
  }
  return out;
}

int smallest_within_tolerance(const std::vector<int>& grid, const std::vector<double>& mse,
                              double tie_tolerance) {
  if (grid.empty() || grid.size() != mse.size())
    throw std::invalid_argument("grid and MSE lists must be nonempty and of equal length");
  const double best = *std::min_element(mse.begin(), mse.end());
  int chosen = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (mse[i] <= best * (1.0 + tie_tolerance)) chosen = std::min(chosen, grid[i]);
  return chosen;
}

KSelection select_latent_dim(const MultiViewDataset& data, std::vector<int> grid,
                             const Hyperparameters& hyper, const InferenceConfig& config,
                             const KSelectionOptions& options) {
  if (grid.empty()) throw std::invalid_argument("latent dimension grid is empty");
  if (std::any_of(grid.begin(), grid.end(), [](int k) { return k < 1; }))
    throw std::invalid_argument("latent dimensions must be positive");
  std::sort(grid.begin(), grid.end());
  if (std::adjacent_find(grid.begin(), grid.end()) != grid.end())
    throw std::invalid_argument("latent dimension grid has duplicates");
  if (!(options.holdout_fraction > 0.0 && options.holdout_fraction <= 0.5))
    throw std::invalid_argument("holdout fraction must lie in (0, 0.5]");
  if (!(options.tie_tolerance >= 0.0)) throw std::invalid_argument("tie tolerance must be >= 0");

  Rng rng(options.holdout_seed);
  const Holdout holdout = hide_cells(data, options.holdout_fraction, rng);
  if (holdout.hidden.empty()) throw std::invalid_argument("holdout selected no cells");

  KSelection out;
  out.grid = grid;
  InferenceConfig cfg = config;
  cfg.record_assignments = true;
  for (int k : grid) {
    Hyperparameters h = hyper;
    h.k_latent = k;
    const FitResult fit = run_stochastic_em(holdout.masked, h, cfg);
    const ImputationResult imp = impute(holdout.masked, fit.proj, fit.trace, h);
    out.mse.push_back(holdout_mse(imp.predictive_mean, holdout.hidden));
  }
  out.selected_k = smallest_within_tolerance(out.grid, out.mse, options.tie_tolerance);
  return out;
}

}  // namespace mvad
