#include "mvad/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "mvad/missing.hpp"

namespace mvad {

// ---------------------------------------------------------------------------
// LIBSVM

LibsvmParseError::LibsvmParseError(std::size_t line_no, const std::string& what)
    : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}

namespace {

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

LibsvmData parse_libsvm(std::istream& in) {
  LibsvmData data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string token;
    if (!(tokens >> token)) continue;  // blank line

    double label = 0.0;
    if (!parse_double(token, label)) throw LibsvmParseError(line_no, "bad label '" + token + "'");
    std::vector<std::pair<int, double>> row;
    int last = 0;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos)
        throw LibsvmParseError(line_no, "expected index:value, got '" + token + "'");
      int index = 0;
      double value = 0.0;
      const std::string_view view(token);
      if (!parse_int(view.substr(0, colon), index) || index < 1)
        throw LibsvmParseError(line_no, "bad feature index in '" + token + "'");
      if (!parse_double(view.substr(colon + 1), value))
        throw LibsvmParseError(line_no, "bad feature value in '" + token + "'");
      if (index <= last)
        throw LibsvmParseError(line_no, "feature indices must be strictly ascending");
      last = index;
      row.emplace_back(index, value);
    }
    data.dim = std::max(data.dim, last);
    data.labels.push_back(label);
    data.rows.push_back(std::move(row));
  }
  return data;
}

LibsvmData parse_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_libsvm(in);
}

Eigen::MatrixXd LibsvmData::dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& [index, value] : rows[i]) out(static_cast<Eigen::Index>(i), index - 1) = value;
  return out;
}

// ---------------------------------------------------------------------------
// Views and anomalies

MultiViewDataset split_views(const Eigen::MatrixXd& features, std::size_t n_views, Rng& rng) {
  if (n_views < 1) throw std::invalid_argument("need at least one view");
  const auto n_rows = features.rows();
  std::vector<Eigen::Index> kept;
  Eigen::VectorXd mean(features.cols());
  Eigen::VectorXd sd(features.cols());
  for (Eigen::Index f = 0; f < features.cols(); ++f) {
    mean(f) = n_rows > 0 ? features.col(f).mean() : 0.0;
    sd(f) = n_rows > 0 ? std::sqrt((features.col(f).array() - mean(f)).square().mean()) : 0.0;
    if (sd(f) > 1e-12 * (1.0 + std::abs(mean(f)))) kept.push_back(f);
  }
  if (kept.size() < n_views)
    throw std::invalid_argument("requested " + std::to_string(n_views) + " views but only " +
                                std::to_string(kept.size()) + " non-constant features");

  std::shuffle(kept.begin(), kept.end(), rng);
  const std::size_t base = kept.size() / n_views;
  const std::size_t extra = kept.size() % n_views;
  std::vector<ViewBlock> views;
  std::size_t offset = 0;
  for (std::size_t d = 0; d < n_views; ++d) {
    const std::size_t size = base + (d < extra ? 1 : 0);
    std::vector<Eigen::Index> group(kept.begin() + static_cast<std::ptrdiff_t>(offset),
                                    kept.begin() + static_cast<std::ptrdiff_t>(offset + size));
    offset += size;
    std::sort(group.begin(), group.end());
    Eigen::MatrixXd values(n_rows, static_cast<Eigen::Index>(size));
    for (std::size_t c = 0; c < group.size(); ++c) {
      const auto f = group[c];
      values.col(static_cast<Eigen::Index>(c)) = (features.col(f).array() - mean(f)) / sd(f);
    }
    views.push_back(ViewBlock::fully_observed(std::move(values)));
  }
  return MultiViewDataset(std::move(views));
}

std::size_t anomaly_count(double anomaly_rate, std::size_t n_instances) {
  if (!(anomaly_rate >= 0.0 && anomaly_rate < 1.0))
    throw std::invalid_argument("anomaly rate must lie in [0, 1)");
  const double exact = anomaly_rate * static_cast<double>(n_instances);
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-6)
    throw std::invalid_argument("anomaly rate times instance count is not an integer");
  return static_cast<std::size_t>(rounded);
}

SwapResult inject_swap_anomalies(const MultiViewDataset& data, double anomaly_rate, Rng& rng) {
  const std::size_t n = data.n_instances();
  const std::size_t count = anomaly_count(anomaly_rate, n);
  if (count % 2 != 0) throw std::invalid_argument("swap anomalies need an even anomaly count");
  if (count > n) throw std::invalid_argument("not enough instances for the requested anomalies");
  if (count > 0 && data.n_views() < 2)
    throw std::invalid_argument("swap anomalies need at least two views");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<ViewBlock> views = data.views();
  std::vector<bool> labels(n, false);
  SwapResult out;
  std::uniform_int_distribution<std::size_t> pick_view(0, data.n_views() - 1);
  for (std::size_t i = 0; i + 1 < count; i += 2) {
    const std::size_t first = order[i];
    const std::size_t second = order[i + 1];
    const std::size_t d = pick_view(rng);
    const auto r1 = static_cast<Eigen::Index>(first);
    const auto r2 = static_cast<Eigen::Index>(second);
    views[d].values.row(r1).swap(views[d].values.row(r2));
    views[d].observed.row(r1).swap(views[d].observed.row(r2));
    labels[first] = labels[second] = true;
    out.pairs.emplace_back(first, second);
  }
  out.data = MultiViewDataset(std::move(views), std::move(labels));
  return out;
}

namespace {

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

SyntheticData assemble(const std::vector<Eigen::MatrixXd>& weights,
                       const std::vector<Eigen::MatrixXd>& latents,
                       const std::vector<std::vector<int>>& view_block, std::vector<bool> labels,
                       double noise_sd, Rng& rng) {
  const std::size_t n = latents.size();
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<ViewBlock> views;
  for (std::size_t d = 0; d < weights.size(); ++d) {
    Eigen::MatrixXd values(static_cast<Eigen::Index>(n), weights[d].rows());
    views.push_back(ViewBlock::fully_observed(std::move(values)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < weights.size(); ++d) {
      const Eigen::VectorXd signal = weights[d] * latents[i].col(view_block[i][d]);
      for (Eigen::Index m = 0; m < signal.size(); ++m)
        views[d].values(static_cast<Eigen::Index>(i), m) = signal(m) + noise_sd * noise(rng);
    }
  }
  SyntheticData out;
  out.data = MultiViewDataset(std::move(views), std::move(labels));
  out.projections.weights = weights;
  out.latents = latents;
  return out;
}

}  // namespace

SyntheticData gen_synthetic_cca(const SyntheticCcaOptions& options, Rng& rng) {
  if (options.k_star < 1) throw std::invalid_argument("k_star must be at least 1");
  if (options.view_dims.empty()) throw std::invalid_argument("need at least one view");
  if (std::any_of(options.view_dims.begin(), options.view_dims.end(),
                  [](std::size_t m) { return m < 1; }))
    throw std::invalid_argument("view dimensions must be positive");
  if (!(options.noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be nonnegative");
  if (!(options.anomaly_rate >= 0.0 && options.anomaly_rate < 1.0))
    throw std::invalid_argument("anomaly rate must lie in [0, 1)");

  const std::size_t n = options.n_instances;
  const std::size_t n_views = options.view_dims.size();
  const auto count = static_cast<std::size_t>(
      std::llround(options.anomaly_rate * static_cast<double>(n)));
  if (count > 0 && n_views < 2)
    throw std::invalid_argument("multi-view anomalies need at least two views");

  std::vector<Eigen::MatrixXd> weights;
  for (std::size_t m : options.view_dims)
    weights.push_back(standard_normal(static_cast<Eigen::Index>(m), options.k_star, rng));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> labels(n, false);
  for (std::size_t i = 0; i < count; ++i) labels[order[i]] = true;

  std::vector<Eigen::MatrixXd> latents(n);
  std::vector<std::vector<int>> view_block(n, std::vector<int>(n_views, 0));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels[i]) {
      latents[i] = standard_normal(options.k_star, 1, rng);
      continue;
    }
    latents[i] = standard_normal(options.k_star, 2, rng);
    auto& blocks = view_block[i];
    if (n_views == 2) {
      blocks = {0, 1};
    } else {
      do {
        for (auto& b : blocks) b = coin(rng) ? 1 : 0;
      } while (std::all_of(blocks.begin(), blocks.end(), [&](int b) { return b == blocks[0]; }));
    }
  }
  return assemble(weights, latents, view_block, std::move(labels), options.noise_sd, rng);
}

SyntheticData gen_single_view_anomalies(const SingleViewOptions& options, Rng& rng) {
  if (options.k_latent < 1) throw std::invalid_argument("k_latent must be at least 1");
  if (options.view_dim < 1 || options.n_views < 1)
    throw std::invalid_argument("view shape must be positive");
  if (!(options.variance_scale > 0.0)) throw std::invalid_argument("variance_scale must be > 0");

  const std::size_t n = options.n_normal + options.n_anomalous;
  std::vector<Eigen::MatrixXd> weights;
  for (std::size_t d = 0; d < options.n_views; ++d)
    weights.push_back(
        standard_normal(static_cast<Eigen::Index>(options.view_dim), options.k_latent, rng));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> labels(n, false);
  for (std::size_t i = 0; i < options.n_anomalous; ++i) labels[order[i]] = true;

  const double anomaly_sd = options.scale_mode == ScaleMode::covariance
                                ? std::sqrt(options.variance_scale)
                                : options.variance_scale;
  std::vector<Eigen::MatrixXd> latents(n);
  for (std::size_t i = 0; i < n; ++i) {
    latents[i] = standard_normal(options.k_latent, 1, rng);
    if (labels[i]) latents[i] *= anomaly_sd;
  }
  const std::vector<std::vector<int>> view_block(n, std::vector<int>(options.n_views, 0));
  return assemble(weights, latents, view_block, std::move(labels), options.noise_sd, rng);
}

// ---------------------------------------------------------------------------
// Metrics

bool has_both_classes(const std::vector<bool>& labels) {
  const auto positives = std::count(labels.begin(), labels.end(), true);
  return positives > 0 && static_cast<std::size_t>(positives) < labels.size();
}

double auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("scores and labels differ in length");
  if (!has_both_classes(labels)) throw std::invalid_argument("AUC needs both classes");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double mid_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k)
      if (labels[order[k]]) {
        rank_sum += mid_rank;
        n_pos += 1.0;
      }
    start = end;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

Summary summarize(const std::vector<std::optional<double>>& values) {
  Summary s;
  double sum = 0.0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++s.count;
    }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (const auto& v : values)
      if (v) ss += (*v - s.mean) * (*v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(s.count - 1));
    s.standard_error = sd / std::sqrt(static_cast<double>(s.count));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Experiments

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
  if (jobs < 1) throw std::invalid_argument("jobs must be at least 1");
  if (!(anomaly_rate >= 0.0 && anomaly_rate < 1.0))
    throw std::invalid_argument("anomaly rate must lie in [0, 1)");
  if (!(missing_fraction >= 0.0 && missing_fraction <= 0.5))
    throw std::invalid_argument("missing fraction must lie in [0, 0.5]");
  if (source == DataSource::libsvm && path.empty())
    throw std::invalid_argument("libsvm source needs a path");
  hyper.validate();
  inference.validate();
}

std::size_t MetricsReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(per_seed.begin(), per_seed.end(), [](const SeedMetrics& m) { return !m.ok; }));
}

namespace {

Rng stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kHoldoutStream = 2;
constexpr std::uint64_t kModelStream = 3;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

MultiViewDataset build_experiment_data(const ExperimentSpec& spec, std::uint64_t seed,
                                       const LibsvmData* libsvm) {
  Rng rng = stream(seed, kDataStream);
  switch (spec.source) {
    case DataSource::synthetic_cca: {
      SyntheticCcaOptions opt;
      opt.n_instances = spec.n_instances;
      opt.view_dims.assign(spec.n_views, spec.view_dim);
      opt.k_star = spec.k_star;
      opt.anomaly_rate = spec.anomaly_rate;
      opt.noise_sd = spec.noise_sd;
      return gen_synthetic_cca(opt, rng).data;
    }
    case DataSource::single_view:
      return gen_single_view_anomalies(spec.single_view, rng).data;
    case DataSource::libsvm: {
      if (libsvm == nullptr) throw std::invalid_argument("libsvm data not loaded");
      const MultiViewDataset split = split_views(libsvm->dense(), spec.n_views, rng);
      return inject_swap_anomalies(split, spec.anomaly_rate, rng).data;
    }
  }
  throw std::logic_error("unknown data source");
}

SeedMetrics run_seed(const ExperimentSpec& spec, std::uint64_t seed, const LibsvmData* libsvm) {
  SeedMetrics out;
  out.seed = seed;
  try {
    const MultiViewDataset data = build_experiment_data(spec, seed, libsvm);
    std::optional<Holdout> holdout;
    if (spec.missing_fraction > 0.0) {
      Rng rng = stream(seed, kHoldoutStream);
      holdout = hide_cells(data, spec.missing_fraction, rng);
    }
    const MultiViewDataset& fit_data = holdout ? holdout->masked : data;
    const bool scored = data.labels() && has_both_classes(*data.labels());

    InferenceConfig cfg = spec.inference;
    cfg.seed = stream(seed, kModelStream)();
    cfg.record_assignments = holdout.has_value();

    auto start = std::chrono::steady_clock::now();
    const FitResult proposed = run_stochastic_em(fit_data, spec.hyper, cfg);
    out.runtime_proposed = seconds_since(start);
    if (scored) out.auc_proposed = auc(anomaly_scores(proposed.trace).v, *data.labels());
    if (holdout)
      out.mse_proposed = holdout_mse(
          impute(fit_data, proposed.proj, proposed.trace, spec.hyper).predictive_mean,
          holdout->hidden);

    if (spec.run_pcca) {
      InferenceConfig pcca = cfg;
      pcca.resample_assignments = false;
      start = std::chrono::steady_clock::now();
      const FitResult baseline = run_stochastic_em(fit_data, spec.hyper, pcca);
      out.runtime_pcca = seconds_since(start);
      if (scored) out.auc_pcca = auc(reconstruction_scores(baseline.trace), *data.labels());
      if (holdout)
        out.mse_pcca = holdout_mse(
            impute(fit_data, baseline.proj, baseline.state, spec.hyper).predictive_mean,
            holdout->hidden);
    }
    if (holdout) out.mse_average = holdout_mse(column_mean_predictions(fit_data), holdout->hidden);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

MetricsReport run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::optional<LibsvmData> libsvm;
  if (spec.source == DataSource::libsvm) libsvm = parse_libsvm(spec.path);
  const LibsvmData* source = libsvm ? &*libsvm : nullptr;

  MetricsReport report;
  report.per_seed.resize(spec.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.seeds.size(); i = next++)
      report.per_seed[i] = run_seed(spec, spec.seeds[i], source);
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), spec.seeds.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  auto collect = [&](auto field) {
    std::vector<std::optional<double>> values;
    for (const auto& m : report.per_seed)
      if (m.ok) values.push_back(field(m));
    return summarize(values);
  };
  report.auc_proposed = collect([](const SeedMetrics& m) { return m.auc_proposed; });
  report.auc_pcca = collect([](const SeedMetrics& m) { return m.auc_pcca; });
  report.mse_proposed = collect([](const SeedMetrics& m) { return m.mse_proposed; });
  report.mse_pcca = collect([](const SeedMetrics& m) { return m.mse_pcca; });
  report.mse_average = collect([](const SeedMetrics& m) { return m.mse_average; });
  report.runtime_proposed =
      collect([](const SeedMetrics& m) { return std::optional<double>(m.runtime_proposed); });
  report.runtime_pcca =
      collect([&](const SeedMetrics& m) {
        return spec.run_pcca ? std::optional<double>(m.runtime_pcca) : std::nullopt;
      });
  return report;
}

}  // namespace mvad
