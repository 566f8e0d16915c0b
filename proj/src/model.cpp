#include "mvad/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mvad {

void Hyperparameters::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string(name) + " must be a positive finite number");
  };
  positive(a, "a");
  positive(b, "b");
  positive(r, "r");
  positive(gamma, "gamma");
  if (k_latent < 1) throw std::invalid_argument("k_latent must be at least 1");
}

// ---------------------------------------------------------------------------
// ProjectionSet

void ProjectionSet::validate(const MultiViewDataset& data, int k_latent) const {
  if (weights.size() != data.n_views())
    throw std::invalid_argument("projection count differs from view count");
  for (std::size_t d = 0; d < weights.size(); ++d) {
    const auto& w = weights[d];
    if (static_cast<std::size_t>(w.rows()) != data.view_dim(d) || w.cols() != k_latent)
      throw std::invalid_argument("projection " + std::to_string(d) + " has the wrong shape");
    if (!w.allFinite())
      throw std::invalid_argument("projection " + std::to_string(d) + " has non-finite entries");
  }
}

std::size_t ProjectionSet::parameter_count() const noexcept {
  std::size_t count = 0;
  for (const auto& w : weights) count += static_cast<std::size_t>(w.size());
  return count;
}

Eigen::VectorXd ProjectionSet::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  for (const auto& w : weights) {
    flat.segment(offset, w.size()) = w.reshaped();
    offset += w.size();
  }
  return flat;
}

void ProjectionSet::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count())
    throw std::invalid_argument("flat parameter vector has the wrong length");
  Eigen::Index offset = 0;
  for (auto& w : weights) {
    w.reshaped() = flat.segment(offset, w.size());
    offset += w.size();
  }
}

// ---------------------------------------------------------------------------
// AssignmentState

AssignmentState AssignmentState::single_block(std::size_t n_instances, std::size_t n_views) {
  AssignmentState s;
  s.n_views_ = n_views;
  s.labels_.assign(n_instances, std::vector<int>(n_views, 0));
  s.counts_.assign(n_instances, n_views ? std::vector<int>{static_cast<int>(n_views)}
                                        : std::vector<int>{});
  return s;
}

AssignmentState AssignmentState::all_distinct(std::size_t n_instances, std::size_t n_views) {
  AssignmentState s;
  s.n_views_ = n_views;
  std::vector<int> labels(n_views);
  for (std::size_t d = 0; d < n_views; ++d) labels[d] = static_cast<int>(d);
  s.labels_.assign(n_instances, labels);
  s.counts_.assign(n_instances, std::vector<int>(n_views, 1));
  return s;
}

AssignmentState AssignmentState::from_labels(const std::vector<std::vector<int>>& labels) {
  AssignmentState s;
  s.n_views_ = labels.empty() ? 0 : labels.front().size();
  for (const auto& row : labels) {
    if (row.size() != s.n_views_)
      throw std::invalid_argument("every instance needs the same number of view labels");
    std::vector<int> raw_to_compact;
    std::vector<int> raw_seen;
    std::vector<int> compact(row.size());
    std::vector<int> counts;
    for (std::size_t d = 0; d < row.size(); ++d) {
      int found = -1;
      for (std::size_t i = 0; i < raw_seen.size(); ++i)
        if (raw_seen[i] == row[d]) found = static_cast<int>(i);
      if (found < 0) {
        raw_seen.push_back(row[d]);
        counts.push_back(0);
        found = static_cast<int>(raw_seen.size()) - 1;
      }
      compact[d] = found;
      ++counts[found];
    }
    s.labels_.push_back(std::move(compact));
    s.counts_.push_back(std::move(counts));
  }
  return s;
}

std::size_t AssignmentState::total_blocks() const noexcept {
  std::size_t total = 0;
  for (const auto& c : counts_) total += c.size();
  return total;
}

int AssignmentState::detach(std::size_t n, std::size_t d) {
  auto& labels = labels_[n];
  auto& counts = counts_[n];
  const int j = labels[d];
  if (j < 0) throw std::logic_error("view is already detached");
  labels[d] = -1;
  if (--counts[j] > 0) return -1;
  counts.erase(counts.begin() + j);
  for (auto& l : labels)
    if (l > j) --l;
  return j;
}

void AssignmentState::attach(std::size_t n, std::size_t d, std::size_t j) {
  auto& labels = labels_[n];
  auto& counts = counts_[n];
  if (labels[d] >= 0) throw std::logic_error("view is already attached");
  if (j > counts.size()) throw std::out_of_range("block index beyond a new block");
  if (j == counts.size()) counts.push_back(0);
  labels[d] = static_cast<int>(j);
  ++counts[j];
}

std::vector<std::size_t> AssignmentState::members(std::size_t n, std::size_t j) const {
  std::vector<std::size_t> out;
  const auto& labels = labels_[n];
  for (std::size_t d = 0; d < labels.size(); ++d)
    if (labels[d] == static_cast<int>(j)) out.push_back(d);
  return out;
}

void AssignmentState::check() const {
  for (std::size_t n = 0; n < labels_.size(); ++n) {
    const auto& labels = labels_[n];
    const auto& counts = counts_[n];
    if (labels.size() != n_views_) throw std::logic_error("label vector has the wrong length");
    if (n_views_ > 0 && (counts.empty() || counts.size() > n_views_))
      throw std::logic_error("block count out of range");
    std::vector<int> tally(counts.size(), 0);
    for (int l : labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= counts.size())
        throw std::logic_error("label out of range");
      ++tally[l];
    }
    for (std::size_t j = 0; j < counts.size(); ++j)
      if (tally[j] != counts[j] || counts[j] < 1) throw std::logic_error("inconsistent counts");
  }
}

// ---------------------------------------------------------------------------
// ViewTermTable

ViewTermTable::ViewTermTable(const MultiViewDataset& data, const ProjectionSet& proj)
    : n_views_(data.n_views()), k_latent_(static_cast<int>(proj.k_latent())) {
  if (proj.n_views() != data.n_views())
    throw std::invalid_argument("projection count differs from view count");
  const std::size_t n_inst = data.n_instances();
  full_gram_.resize(n_views_);
  projections_.resize(n_views_);
  partial_gram_.assign(n_inst * n_views_, Eigen::MatrixXd());
  sum_sq_.assign(n_inst * n_views_, 0.0);
  observed_.assign(n_inst * n_views_, 0);

  for (std::size_t d = 0; d < n_views_; ++d) {
    const auto& w = proj.weights[d];
    const auto& view = data.view(d);
    full_gram_[d] = w.transpose() * w;
    if (data.view_complete(d)) {
      projections_[d] = view.values * w;
      for (std::size_t n = 0; n < n_inst; ++n) {
        sum_sq_[index(n, d)] = view.values.row(static_cast<Eigen::Index>(n)).squaredNorm();
        observed_[index(n, d)] = data.row_observed(n, d);
      }
      continue;
    }
    projections_[d].setZero(static_cast<Eigen::Index>(n_inst), k_latent_);
    for (std::size_t n = 0; n < n_inst; ++n) {
      const auto row = static_cast<Eigen::Index>(n);
      observed_[index(n, d)] = data.row_observed(n, d);
      if (data.row_complete(n, d)) {
        projections_[d].row(row) = view.values.row(row) * w;
        sum_sq_[index(n, d)] = view.values.row(row).squaredNorm();
        continue;
      }
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k_latent_, k_latent_);
      Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(k_latent_);
      double ss = 0.0;
      for (Eigen::Index m = 0; m < view.values.cols(); ++m) {
        if (!view.observed(row, m)) continue;
        const double x = view.values(row, m);
        gram.noalias() += w.row(m).transpose() * w.row(m);
        p += x * w.row(m);
        ss += x * x;
      }
      partial_gram_[index(n, d)] = std::move(gram);
      projections_[d].row(row) = p;
      sum_sq_[index(n, d)] = ss;
    }
  }
}

// ---------------------------------------------------------------------------
// Closed-form statistics

BlockStats BlockStats::from(Eigen::MatrixXd precision, Eigen::VectorXd projection_sum) {
  BlockStats s;
  s.precision = std::move(precision);
  s.projection_sum = std::move(projection_sum);
  s.chol.compute(s.precision);
  if (s.chol.info() != Eigen::Success)
    throw NumericalError("latent precision matrix is not positive definite");
  s.mean = s.chol.solve(s.projection_sum);
  s.quad = s.projection_sum.dot(s.mean);
  const auto& l = s.chol.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += std::log(l(i, i));
  s.log_det_precision = 2.0 * log_det;
  return s;
}

BlockStats block_from_views(const ViewTermTable& terms, std::size_t n,
                            const std::vector<std::size_t>& views, double r, int k_latent) {
  Eigen::MatrixXd precision = r * Eigen::MatrixXd::Identity(k_latent, k_latent);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(k_latent);
  for (std::size_t d : views) {
    precision += terms.gram(n, d);
    h += terms.projection(n, d);
  }
  return BlockStats::from(std::move(precision), std::move(h));
}

double partition_log_prior(const AssignmentState& state, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  const double log_gamma = std::log(gamma);
  double total = 0.0;
  for (std::size_t n = 0; n < state.n_instances(); ++n) {
    const std::size_t n_views = state.labels(n).size();
    double term = static_cast<double>(state.n_blocks(n)) * log_gamma;
    for (std::size_t j = 0; j < state.n_blocks(n); ++j) term += std::lgamma(state.count(n, j));
    for (std::size_t i = 0; i < n_views; ++i) term -= std::log(gamma + static_cast<double>(i));
    total += term;
  }
  return total;
}

LatentStats compute_latent_stats(const MultiViewDataset& data, const AssignmentState& state,
                                 const ViewTermTable& terms, const Hyperparameters& hyper) {
  hyper.validate();
  if (state.n_instances() != data.n_instances() ||
      (data.n_instances() > 0 && state.n_views() != data.n_views()))
    throw std::invalid_argument("assignment state shape differs from dataset");

  LatentStats stats;
  stats.k_latent = hyper.k_latent;
  stats.blocks.resize(data.n_instances());
  for (std::size_t n = 0; n < data.n_instances(); ++n) {
    auto& blocks = stats.blocks[n];
    blocks.reserve(state.n_blocks(n));
    for (std::size_t j = 0; j < state.n_blocks(n); ++j)
      blocks.push_back(block_from_views(terms, n, state.members(n, j), hyper.r, hyper.k_latent));
    for (std::size_t d = 0; d < data.n_views(); ++d) {
      stats.sum_sq += terms.sum_sq(n, d);
      stats.observed_cells += static_cast<double>(terms.observed(n, d));
    }
    for (const auto& blk : blocks) stats.sum_quad += blk.quad;
    stats.total_blocks += blocks.size();
  }
  stats.a_prime = hyper.a + 0.5 * stats.observed_cells;
  stats.b_prime = hyper.b + 0.5 * (stats.sum_sq - stats.sum_quad);
  return stats;
}

LatentStats compute_latent_stats(const MultiViewDataset& data, const AssignmentState& state,
                                 const ProjectionSet& proj, const Hyperparameters& hyper) {
  proj.validate(data, hyper.k_latent);
  return compute_latent_stats(data, state, ViewTermTable(data, proj), hyper);
}

double marginal_log_likelihood(const LatentStats& stats, const Hyperparameters& hyper) {
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  double value = -0.5 * stats.observed_cells * log_two_pi +
                 0.5 * hyper.k_latent * static_cast<double>(stats.total_blocks) * std::log(hyper.r) +
                 hyper.a * std::log(hyper.b) - stats.a_prime * std::log(stats.b_prime) +
                 std::lgamma(stats.a_prime) - std::lgamma(hyper.a);
  for (const auto& blocks : stats.blocks)
    for (const auto& blk : blocks) value -= 0.5 * blk.log_det_precision;
  return value;
}

double marginal_log_likelihood(const MultiViewDataset& data, const AssignmentState& state,
                               const ProjectionSet& proj, const Hyperparameters& hyper) {
  return marginal_log_likelihood(compute_latent_stats(data, state, proj, hyper), hyper);
}

double joint_log_likelihood(const MultiViewDataset& data, const AssignmentState& state,
                            const ProjectionSet& proj, const Hyperparameters& hyper) {
  return partition_log_prior(state, hyper.gamma) + marginal_log_likelihood(data, state, proj, hyper);
}

GammaParams alpha_posterior(const LatentStats& stats) { return {stats.a_prime, stats.b_prime}; }

LatentPosterior latent_posterior(const LatentStats& stats, std::size_t n, std::size_t j) {
  if (n >= stats.blocks.size() || j >= stats.blocks[n].size())
    throw std::out_of_range("latent vector (" + std::to_string(n) + ", " + std::to_string(j) +
                            ") is not occupied");
  const auto& blk = stats.blocks[n][j];
  const auto k = blk.precision.rows();
  return {blk.mean, blk.chol.solve(Eigen::MatrixXd::Identity(k, k))};
}

}  // namespace mvad
