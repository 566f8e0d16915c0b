#include "mvad/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace mvad {

void InferenceConfig::validate() const {
  if (n_sweeps < 1) throw std::invalid_argument("n_sweeps must be at least 1");
  if (burn_in < 0 || burn_in >= n_sweeps)
    throw std::invalid_argument("burn_in must satisfy 0 <= burn_in < n_sweeps");
  if (mstep_every < 1) throw std::invalid_argument("mstep_every must be at least 1");
  if (mstep_max_iters < 0 || warm_start_iters < 0)
    throw std::invalid_argument("iteration caps must be nonnegative");
  if (!(mstep_grad_tol > 0.0)) throw std::invalid_argument("mstep_grad_tol must be positive");
}

double InferenceConfig::effective_init_scale(int k_latent) const {
  return init_scale > 0.0 ? init_scale : 1.0 / std::sqrt(static_cast<double>(k_latent));
}

// ---------------------------------------------------------------------------
// Scores

AnomalyScores anomaly_scores(const GibbsTrace& trace) {
  if (trace.entries.empty()) throw std::invalid_argument("trace has no retained sweeps");
  AnomalyScores scores;
  scores.v.assign(trace.n_instances, 0.0);
  for (const auto& entry : trace.entries) {
    if (entry.latent_counts.size() != trace.n_instances)
      throw std::invalid_argument("trace entry has the wrong instance count");
    for (std::size_t n = 0; n < trace.n_instances; ++n)
      if (entry.latent_counts[n] > 1) scores.v[n] += 1.0;
  }
  const double h = static_cast<double>(trace.entries.size());
  for (auto& v : scores.v) v /= h;
  return scores;
}

std::vector<double> reconstruction_scores(const GibbsTrace& trace) {
  if (trace.entries.empty()) throw std::invalid_argument("trace has no retained sweeps");
  std::vector<double> scores(trace.n_instances, 0.0);
  for (const auto& entry : trace.entries) {
    if (entry.reconstruction_error.size() != trace.n_instances)
      throw std::invalid_argument("trace entry lacks reconstruction errors");
    for (std::size_t n = 0; n < trace.n_instances; ++n) scores[n] += entry.reconstruction_error[n];
  }
  for (auto& s : scores) s /= static_cast<double>(trace.entries.size());
  return scores;
}

std::vector<double> reconstruction_errors(const MultiViewDataset& data,
                                          const AssignmentState& state,
                                          const ProjectionSet& proj, const LatentStats& stats) {
  std::vector<double> errors(data.n_instances(), 0.0);
  for (std::size_t n = 0; n < data.n_instances(); ++n) {
    for (std::size_t d = 0; d < data.n_views(); ++d) {
      const auto& view = data.view(d);
      const auto row = static_cast<Eigen::Index>(n);
      const Eigen::VectorXd pred = proj.weights[d] * stats.blocks[n][state.block_of(n, d)].mean;
      for (Eigen::Index m = 0; m < view.values.cols(); ++m) {
        if (!view.observed(row, m)) continue;
        const double diff = view.values(row, m) - pred(m);
        errors[n] += diff * diff;
      }
    }
  }
  return errors;
}

// ---------------------------------------------------------------------------
// Gibbs sampler

GibbsSampler::GibbsSampler(const MultiViewDataset& data, const Hyperparameters& hyper,
                           ProjectionSet proj, AssignmentState state)
    : data_(&data), hyper_(hyper), proj_(std::move(proj)), state_(std::move(state)) {
  hyper_.validate();
  proj_.validate(data, hyper_.k_latent);
  state_.check();
  terms_ = ViewTermTable(data, proj_);
  stats_ = compute_latent_stats(data, state_, terms_, hyper_);
}

void GibbsSampler::set_projection(ProjectionSet proj) {
  proj.validate(*data_, hyper_.k_latent);
  proj_ = std::move(proj);
  terms_ = ViewTermTable(*data_, proj_);
  stats_ = compute_latent_stats(*data_, state_, terms_, hyper_);
}

double GibbsSampler::joint_log_likelihood() const {
  return partition_log_prior(state_, hyper_.gamma) + marginal_log_likelihood(stats_, hyper_);
}

void GibbsSampler::refresh_globals() {
  stats_.a_prime = hyper_.a + 0.5 * stats_.observed_cells;
  stats_.b_prime = hyper_.b + 0.5 * (stats_.sum_sq - stats_.sum_quad);
}

void GibbsSampler::resync_quad() {
  double sum_sq = 0.0;
  double observed = 0.0;
  double sum_quad = 0.0;
  for (std::size_t n = 0; n < data_->n_instances(); ++n) {
    for (std::size_t d = 0; d < data_->n_views(); ++d) {
      sum_sq += terms_.sum_sq(n, d);
      observed += static_cast<double>(terms_.observed(n, d));
    }
    for (const auto& blk : stats_.blocks[n]) sum_quad += blk.quad;
  }
  stats_.sum_sq = sum_sq;
  stats_.observed_cells = observed;
  stats_.sum_quad = sum_quad;
  refresh_globals();
}

void GibbsSampler::rebuild_block(std::size_t n, std::size_t j) {
  stats_.blocks[n][j] =
      block_from_views(terms_, n, state_.members(n, j), hyper_.r, hyper_.k_latent);
}

void GibbsSampler::detach(std::size_t n, std::size_t d) {
  const auto j = static_cast<std::size_t>(state_.block_of(n, d));
  const double old_quad = stats_.blocks[n][j].quad;
  const int removed = state_.detach(n, d);
  stats_.sum_sq -= terms_.sum_sq(n, d);
  stats_.observed_cells -= static_cast<double>(terms_.observed(n, d));
  if (removed >= 0) {
    stats_.blocks[n].erase(stats_.blocks[n].begin() + removed);
    stats_.sum_quad -= old_quad;
    --stats_.total_blocks;
  } else {
    rebuild_block(n, j);
    stats_.sum_quad += stats_.blocks[n][j].quad - old_quad;
  }
  refresh_globals();
}

void GibbsSampler::attach(std::size_t n, std::size_t d, std::size_t j) {
  state_.attach(n, d, j);
  stats_.sum_sq += terms_.sum_sq(n, d);
  stats_.observed_cells += static_cast<double>(terms_.observed(n, d));
  if (j == stats_.blocks[n].size()) {
    stats_.blocks[n].push_back(block_from_views(terms_, n, {d}, hyper_.r, hyper_.k_latent));
    stats_.sum_quad += stats_.blocks[n].back().quad;
    ++stats_.total_blocks;
  } else {
    const double old_quad = stats_.blocks[n][j].quad;
    rebuild_block(n, j);
    stats_.sum_quad += stats_.blocks[n][j].quad - old_quad;
  }
  refresh_globals();
}

ResampleResult GibbsSampler::resample(std::size_t n, std::size_t d, Rng& rng) {
  detach(n, d);

  const auto k = hyper_.k_latent;
  const std::size_t n_views = state_.n_views();
  const std::size_t n_blocks = state_.n_blocks(n);
  const double log_two_pi = std::log(2.0 * std::numbers::pi);

  const double a_without = stats_.a_prime;
  const double b_without = stats_.b_prime;
  const double m = static_cast<double>(terms_.observed(n, d));
  const double a_full = a_without + 0.5 * m;
  const double sum_sq = terms_.sum_sq(n, d);
  const double shared = -0.5 * m * log_two_pi + a_without * std::log(b_without) +
                        std::lgamma(a_full) - std::lgamma(a_without);
  const double log_denominator = std::log(static_cast<double>(n_views) - 1.0 + hyper_.gamma);

  const auto& gram = terms_.gram(n, d);
  const Eigen::VectorXd proj = terms_.projection(n, d);

  ResampleResult out;
  out.log_prior.reserve(n_blocks + 1);
  out.log_likelihood_ratio.reserve(n_blocks + 1);
  for (std::size_t j = 0; j < n_blocks; ++j) {
    const auto& blk = stats_.blocks[n][j];
    const auto cand = BlockStats::from(blk.precision + gram, blk.projection_sum + proj);
    const double b_j = b_without + 0.5 * (sum_sq + blk.quad - cand.quad);
    out.log_likelihood_ratio.push_back(shared - a_full * std::log(b_j) +
                                       0.5 * (blk.log_det_precision - cand.log_det_precision));
    out.log_prior.push_back(std::log(static_cast<double>(state_.count(n, j))) - log_denominator);
  }
  {
    const auto cand =
        BlockStats::from(hyper_.r * Eigen::MatrixXd::Identity(k, k) + gram, proj);
    const double b_new = b_without + 0.5 * (sum_sq - cand.quad);
    out.log_likelihood_ratio.push_back(
        shared - a_full * std::log(b_new) +
        0.5 * (k * std::log(hyper_.r) - cand.log_det_precision));
    out.log_prior.push_back(std::log(hyper_.gamma) - log_denominator);
  }

  out.log_weights.resize(out.log_prior.size());
  double max_w = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < out.log_weights.size(); ++j) {
    out.log_weights[j] = out.log_prior[j] + out.log_likelihood_ratio[j];
    max_w = std::max(max_w, out.log_weights[j]);
  }
  scratch_.resize(out.log_weights.size());
  double total = 0.0;
  for (std::size_t j = 0; j < out.log_weights.size(); ++j) {
    scratch_[j] = std::exp(out.log_weights[j] - max_w);
    total += scratch_[j];
  }
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  out.chosen = out.log_weights.size() - 1;
  for (std::size_t j = 0; j < scratch_.size(); ++j) {
    acc += scratch_[j];
    if (u < acc) {
      out.chosen = j;
      break;
    }
  }

  attach(n, d, out.chosen);
  return out;
}

void GibbsSampler::sweep(Rng& rng, bool random_scan) {
  const std::size_t n_inst = data_->n_instances();
  const std::size_t n_views = data_->n_views();
  if (random_scan) {
    std::vector<std::size_t> order(n_inst * n_views);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) resample(i / n_views, i % n_views, rng);
  } else {
    for (std::size_t n = 0; n < n_inst; ++n)
      for (std::size_t d = 0; d < n_views; ++d) resample(n, d, rng);
  }
  resync_quad();
}

// ---------------------------------------------------------------------------
// M-step

namespace {

std::vector<Eigen::MatrixXd> all_gradients(const MultiViewDataset& data,
                                           const AssignmentState& state,
                                           const LatentStats& stats, const ProjectionSet& proj,
                                           const Hyperparameters& hyper,
                                           std::optional<std::size_t> only_view) {
  const int k = hyper.k_latent;
  const double ratio = stats.a_prime / stats.b_prime;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(k, k);

  // C_nj + (a'/b') mu mu^T for every occupied block.
  std::vector<std::vector<Eigen::MatrixXd>> weight(data.n_instances());
  for (std::size_t n = 0; n < data.n_instances(); ++n) {
    for (const auto& blk : stats.blocks[n]) {
      Eigen::MatrixXd w = blk.chol.solve(identity);
      w.noalias() += ratio * blk.mean * blk.mean.transpose();
      weight[n].push_back(std::move(w));
    }
  }

  std::vector<Eigen::MatrixXd> grads(data.n_views());
  for (std::size_t d = 0; d < data.n_views(); ++d) {
    if (only_view && *only_view != d) continue;
    const auto& view = data.view(d);
    const auto& w = proj.weights[d];
    Eigen::MatrixXd weight_sum = Eigen::MatrixXd::Zero(k, k);
    Eigen::MatrixXd means(view.values.rows(), k);
    means.setZero();
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.rows(), k);
    for (std::size_t n = 0; n < data.n_instances(); ++n) {
      const auto row = static_cast<Eigen::Index>(n);
      const auto j = static_cast<std::size_t>(state.block_of(n, d));
      const auto& mu = stats.blocks[n][j].mean;
      if (data.row_complete(n, d)) {
        weight_sum += weight[n][j];
        means.row(row) = mu.transpose();
        continue;
      }
      for (Eigen::Index m = 0; m < view.values.cols(); ++m) {
        if (!view.observed(row, m)) continue;
        grad.row(m).noalias() -= w.row(m) * weight[n][j];
        grad.row(m).noalias() += (ratio * view.values(row, m)) * mu.transpose();
      }
    }
    grad.noalias() -= w * weight_sum;
    if (data.view_complete(d)) {
      grad.noalias() += ratio * (view.values.transpose() * means);
    } else {
      for (std::size_t n = 0; n < data.n_instances(); ++n) {
        if (!data.row_complete(n, d)) continue;
        const auto row = static_cast<Eigen::Index>(n);
        grad.noalias() += ratio * view.values.row(row).transpose() * means.row(row);
      }
    }
    grads[d] = std::move(grad);
  }
  return grads;
}

}  // namespace

Eigen::MatrixXd mstep_gradient(const MultiViewDataset& data, const AssignmentState& state,
                               const LatentStats& stats, const ProjectionSet& proj,
                               const Hyperparameters& hyper, std::size_t d) {
  if (d >= data.n_views()) throw std::out_of_range("view index out of range");
  return std::move(all_gradients(data, state, stats, proj, hyper, d)[d]);
}

ObjectiveValue joint_objective(const MultiViewDataset& data, const AssignmentState& state,
                               const ProjectionSet& proj, const Hyperparameters& hyper) {
  const ViewTermTable terms(data, proj);
  const LatentStats stats = compute_latent_stats(data, state, terms, hyper);
  ObjectiveValue out;
  out.value = partition_log_prior(state, hyper.gamma) + marginal_log_likelihood(stats, hyper);
  out.gradient = all_gradients(data, state, stats, proj, hyper, std::nullopt);
  return out;
}

MStepResult mstep_optimize(const MultiViewDataset& data, const AssignmentState& state,
                           const ProjectionSet& proj, const Hyperparameters& hyper,
                           int max_iters, double grad_tol) {
  proj.validate(data, hyper.k_latent);
  ProjectionSet work = proj;
  const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    work.assign(x);
    const ObjectiveValue ov = joint_objective(data, state, work, hyper);
    grad.resize(x.size());
    Eigen::Index offset = 0;
    for (const auto& g : ov.gradient) {
      grad.segment(offset, g.size()) = g.reshaped();
      offset += g.size();
    }
    return ov.value;
  };
  LbfgsOptions options;
  options.max_iterations = max_iters;
  options.grad_tolerance = grad_tol;
  const LbfgsResult res = lbfgs_maximize(objective, proj.flatten(), options);

  MStepResult out;
  out.proj = proj;
  out.status = res.status;
  out.iterations = res.iterations;
  out.value_before = res.initial_value;
  if (res.status == LbfgsStatus::evaluation_failed) {
    out.value_after = res.initial_value;
    return out;
  }
  out.proj.assign(res.x);
  out.value_after = res.value;
  out.grad_norm = res.gradient.norm();
  return out;
}

// ---------------------------------------------------------------------------
// Driver

ProjectionSet random_projections(const MultiViewDataset& data, int k_latent, double scale,
                                 Rng& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  ProjectionSet proj;
  for (std::size_t d = 0; d < data.n_views(); ++d) {
    Eigen::MatrixXd w(static_cast<Eigen::Index>(data.view_dim(d)), k_latent);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = normal(rng);
    proj.weights.push_back(std::move(w));
  }
  return proj;
}

FitResult run_stochastic_em(const MultiViewDataset& data, const Hyperparameters& hyper,
                            const InferenceConfig& config) {
  hyper.validate();
  config.validate();
  Rng rng(config.seed);

  ProjectionSet proj =
      random_projections(data, hyper.k_latent, config.effective_init_scale(hyper.k_latent), rng);
  AssignmentState state = AssignmentState::single_block(data.n_instances(), data.n_views());
  if (config.warm_start_iters > 0)
    proj = mstep_optimize(data, state, proj, hyper, config.warm_start_iters,
                          config.mstep_grad_tol)
               .proj;

  GibbsSampler sampler(data, hyper, std::move(proj), std::move(state));
  FitResult fit;
  fit.trace.n_sweeps = config.n_sweeps;
  fit.trace.burn_in = config.burn_in;
  fit.trace.n_instances = data.n_instances();
  fit.trace.n_views = data.n_views();
  fit.trace.entries.reserve(static_cast<std::size_t>(config.n_sweeps - config.burn_in));

  for (int sweep = 1; sweep <= config.n_sweeps; ++sweep) {
    if (config.resample_assignments) sampler.sweep(rng, config.random_scan);
    if (sweep % config.mstep_every == 0) {
      auto m = mstep_optimize(data, sampler.state(), sampler.projection(), hyper,
                              config.mstep_max_iters, config.mstep_grad_tol);
      sampler.set_projection(std::move(m.proj));
    }
    if (sweep <= config.burn_in) continue;

    TraceEntry entry;
    entry.sweep = sweep;
    const auto& st = sampler.state();
    entry.latent_counts.resize(data.n_instances());
    for (std::size_t n = 0; n < data.n_instances(); ++n)
      entry.latent_counts[n] = static_cast<int>(st.n_blocks(n));
    entry.log_likelihood = sampler.joint_log_likelihood();
    entry.reconstruction_error =
        reconstruction_errors(data, st, sampler.projection(), sampler.stats());
    if (config.record_assignments) {
      entry.assignments.reserve(data.n_instances());
      for (std::size_t n = 0; n < data.n_instances(); ++n) entry.assignments.push_back(st.labels(n));
    }
    fit.trace.entries.push_back(std::move(entry));
  }

  fit.proj = sampler.projection();
  fit.state = sampler.state();
  fit.final_log_likelihood = sampler.joint_log_likelihood();
  return fit;
}

}  // namespace mvad
