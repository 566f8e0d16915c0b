#pragma once

// Experimental protocol: data ingestion, view construction, anomaly
// injection, synthetic generators, metrics and baselines.

#include <Eigen/Core>
#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvad/dataset.hpp"
#include "mvad/inference.hpp"
#include "mvad/model.hpp"

namespace mvad {

// ---------------------------------------------------------------------------
// LIBSVM sparse text

struct LibsvmParseError : std::runtime_error {
  LibsvmParseError(std::size_t line, const std::string& what);
  std::size_t line;
};

struct LibsvmData {
  std::vector<double> labels;
  std::vector<std::vector<std::pair<int, double>>> rows;  // 1-based feature indices
  int dim = 0;

  [[nodiscard]] Eigen::MatrixXd dense() const;
};

[[nodiscard]] LibsvmData parse_libsvm(std::istream& in);
[[nodiscard]] LibsvmData parse_libsvm(const std::string& path);

// ---------------------------------------------------------------------------
// View construction and anomaly injection

/// Randomly partitions standardized, non-constant features into D views of
/// near-equal size (column order within a view follows the original order).
[[nodiscard]] MultiViewDataset split_views(const Eigen::MatrixXd& features, std::size_t n_views,
                                           Rng& rng);

struct SwapResult {
  MultiViewDataset data;  // labelled
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Swaps one random view between each of rate*N/2 random instance pairs.
[[nodiscard]] SwapResult inject_swap_anomalies(const MultiViewDataset& data, double anomaly_rate,
                                               Rng& rng);

/// Number of anomalies implied by a rate, rejecting a rate that does not land
/// on an integer count.
[[nodiscard]] std::size_t anomaly_count(double anomaly_rate, std::size_t n_instances);

struct SyntheticData {
  MultiViewDataset data;  // labelled
  ProjectionSet projections;
  std::vector<Eigen::MatrixXd> latents;  // per instance, K x (number of latent vectors)
};

struct SyntheticCcaOptions {
  std::size_t n_instances = 100;
  std::vector<std::size_t> view_dims = {10, 10};
  int k_star = 5;
  double anomaly_rate = 0.0;
  double noise_sd = 0.1;
};

/// Normal instances share one latent vector across views; anomalies draw two,
/// one per block of a random two-block partition of the views.
[[nodiscard]] SyntheticData gen_synthetic_cca(const SyntheticCcaOptions& options, Rng& rng);

enum class ScaleMode { covariance, standard_deviation };

struct SingleViewOptions {
  std::size_t n_normal = 95;
  std::size_t n_anomalous = 5;
  std::size_t view_dim = 5;
  int k_latent = 3;
  double variance_scale = 3.1622776601683795;  // sqrt(10)
  ScaleMode scale_mode = ScaleMode::covariance;
  double noise_sd = 0.1;
  std::size_t n_views = 2;
};

/// Two-view data whose anomalies have inflated latent vectors but consistent views.
[[nodiscard]] SyntheticData gen_single_view_anomalies(const SingleViewOptions& options, Rng& rng);

// ---------------------------------------------------------------------------
// Metrics

/// Mann-Whitney AUC with ties counted one half. Throws on single-class labels.
[[nodiscard]] double auc(const std::vector<double>& scores, const std::vector<bool>& labels);

[[nodiscard]] bool has_both_classes(const std::vector<bool>& labels);

struct Summary {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t count = 0;
};
/// Mean and sample standard deviation / sqrt(count) of the present values.
[[nodiscard]] Summary summarize(const std::vector<std::optional<double>>& values);

// ---------------------------------------------------------------------------
// Experiments

enum class DataSource { libsvm, synthetic_cca, single_view };

struct ExperimentSpec {
  DataSource source = DataSource::synthetic_cca;
  std::string path;  // libsvm source
  std::size_t n_views = 2;
  double anomaly_rate = 0.2;
  double missing_fraction = 0.0;
  std::vector<std::uint64_t> seeds = {1};
  int jobs = 1;
  bool run_pcca = true;

  // synthetic generators
  std::size_t n_instances = 100;
  std::size_t view_dim = 10;
  int k_star = 5;
  double noise_sd = 0.1;
  SingleViewOptions single_view;

  Hyperparameters hyper;
  InferenceConfig inference;

  void validate() const;
};

struct SeedMetrics {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<double> auc_proposed;
  std::optional<double> auc_pcca;
  std::optional<double> mse_proposed;
  std::optional<double> mse_pcca;
  std::optional<double> mse_average;
  double runtime_proposed = 0.0;  // seconds
  double runtime_pcca = 0.0;
};

struct MetricsReport {
  std::vector<SeedMetrics> per_seed;
  Summary auc_proposed;
  Summary auc_pcca;
  Summary mse_proposed;
  Summary mse_pcca;
  Summary mse_average;
  Summary runtime_proposed;
  Summary runtime_pcca;

  [[nodiscard]] std::size_t failures() const;
};

/// Builds the dataset for one seed: synthetic draw, or libsvm split plus swap injection.
[[nodiscard]] MultiViewDataset build_experiment_data(const ExperimentSpec& spec,
                                                     std::uint64_t seed,
                                                     const LibsvmData* libsvm = nullptr);

[[nodiscard]] SeedMetrics run_seed(const ExperimentSpec& spec, std::uint64_t seed,
                                   const LibsvmData* libsvm = nullptr);

/// Runs every seed (in parallel when jobs > 1) and aggregates in seed order.
[[nodiscard]] MetricsReport run_experiment(const ExperimentSpec& spec);

}  // namespace mvad
