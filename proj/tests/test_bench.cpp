#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mvad/bench.hpp"
#include "support.hpp"

using namespace mvad;
using namespace mvad::testing;

namespace {

LibsvmData parse(const std::string& text) {
  std::istringstream in(text);
  return parse_libsvm(in);
}

std::vector<std::vector<double>> sorted_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Eigen::RowVectorXd row = m.row(r);
    rows.emplace_back(row.data(), row.data() + row.size());
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_CASE("libsvm parsing") {
  const auto d = parse("1 1:0.5 3:2.0\n2 \n-1 2:1e-3\n\n# comment only\n+1 4:-7 # trailing\n");
  REQUIRE(d.labels == std::vector<double>{1, 2, -1, 1});
  CHECK(d.dim == 4);
  const auto m = d.dense();
  CHECK(m(0, 0) == 0.5);
  CHECK(m(0, 2) == 2.0);
  CHECK(m.row(1).isZero());
  CHECK(m(2, 1) == 0.001);
  CHECK(m(3, 3) == -7.0);
}

TEST_CASE("libsvm errors carry the line number") {
  for (const char* bad : {"1 2:1 1:3\n", "1 0:1\n", "x 1:1\n", "1 1:abc\n", "1 11\n"}) {
    try {
      (void)parse(std::string("1 1:1\n") + bad);
      FAIL("expected a parse error");
    } catch (const LibsvmParseError& e) {
      CHECK(e.line == 2);
    }
  }
  CHECK_THROWS((void)parse_libsvm(std::string("/nonexistent/file.svm")));
}

TEST_CASE("view splitting") {
  Rng rng(1);
  const Eigen::MatrixXd f = gaussian(30, 11, rng);
  Rng split_rng(2);
  const auto data = split_views(f, 3, split_rng);
  REQUIRE(data.n_views() == 3);
  std::vector<std::size_t> sizes{data.view_dim(0), data.view_dim(1), data.view_dim(2)};
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
  CHECK(data.total_dim() == 11);
  // every standardized original column appears exactly once
  std::multiset<long long> want, got;
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    const Eigen::VectorXd col = f.col(c);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    want.insert(std::llround(1e6 * (col(0) - mean) / sd));
  }
  for (const auto& v : data.views())
    for (Eigen::Index c = 0; c < v.values.cols(); ++c) {
      got.insert(std::llround(1e6 * v.values(0, c)));
      CHECK(v.values.col(c).mean() == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
      CHECK(v.values.col(c).squaredNorm() / 30.0 == doctest::Approx(1.0));
    }
  CHECK(want == got);

  Rng one(3);
  const auto single = split_views(f, 1, one);
  CHECK(single.view_dim(0) == 11);
}

TEST_CASE("view splitting drops constant features") {
  Eigen::MatrixXd f(4, 3);
  f << 1, 5, 0, 2, 5, 1, 3, 5, 0, 4, 5, 1;
  Rng rng(1);
  const auto data = split_views(f, 2, rng);
  CHECK(data.total_dim() == 2);
  Rng rng2(1);
  CHECK_THROWS_AS((void)split_views(f, 3, rng2), std::invalid_argument);
}

TEST_CASE("swap anomalies") {
  Rng rng(4);
  const auto data = random_dataset(100, {3, 4}, rng);
  Rng swap_rng(5);
  const auto res = inject_swap_anomalies(data, 0.2, swap_rng);
  CHECK(res.pairs.size() == 10);
  const auto& labels = *res.data.labels();
  CHECK(std::count(labels.begin(), labels.end(), true) == 20);
  for (std::size_t d = 0; d < 2; ++d) {
    CHECK(sorted_rows(res.data.view(d).values) == sorted_rows(data.view(d).values));
    const Eigen::RowVectorXd m0 = data.view(d).values.colwise().sum();
    const Eigen::RowVectorXd m1 = res.data.view(d).values.colwise().sum();
    CHECK((m0 - m1).norm() < 1e-12);
  }
  // exactly one view differs per swapped instance
  for (const auto& [a, b] : res.pairs) {
    int differing = 0;
    for (std::size_t d = 0; d < 2; ++d)
      if (res.data.view(d).values.row(static_cast<Eigen::Index>(a)) !=
          data.view(d).values.row(static_cast<Eigen::Index>(a)))
        ++differing;
    CHECK(differing == 1);
    (void)b;
  }

  Rng zero_rng(6);
  const auto none = inject_swap_anomalies(data, 0.0, zero_rng);
  CHECK(none.pairs.empty());
  CHECK(none.data.view(0).values == data.view(0).values);
  Rng odd(7);
  CHECK_THROWS_AS((void)inject_swap_anomalies(data, 0.03, odd), std::invalid_argument);
  CHECK_THROWS_AS((void)inject_swap_anomalies(data, 0.025, odd), std::invalid_argument);
  CHECK(anomaly_count(0.2, 100) == 20);
}

TEST_CASE("synthetic CCA data") {
  SyntheticCcaOptions opt;
  opt.noise_sd = 0.0;
  opt.anomaly_rate = 0.0;
  Rng rng(8);
  const auto syn = gen_synthetic_cca(opt, rng);
  for (std::size_t d = 0; d < 2; ++d) {
    const auto& w = syn.projections.weights[d];
    const Eigen::MatrixXd x = syn.data.view(d).values.transpose();
    const Eigen::MatrixXd fit = w * w.colPivHouseholderQr().solve(x);
    CHECK((fit - x).norm() < 1e-9 * x.norm());
  }

  opt.anomaly_rate = 0.2;
  opt.view_dims = {3, 3, 3, 3};
  Rng rng2(9);
  const auto anom = gen_synthetic_cca(opt, rng2);
  const auto& labels = *anom.data.labels();
  CHECK(std::count(labels.begin(), labels.end(), true) == 20);
  for (std::size_t n = 0; n < 100; ++n) CHECK(anom.latents[n].cols() == (labels[n] ? 2 : 1));
}

TEST_CASE("synthetic CCA covariance matches W W^T + noise") {
  SyntheticCcaOptions opt;
  opt.n_instances = 10000;
  opt.view_dims = {3, 2};
  opt.k_star = 2;
  opt.noise_sd = 0.5;
  Rng rng(10);
  const auto syn = gen_synthetic_cca(opt, rng);
  for (std::size_t d = 0; d < 2; ++d) {
    const auto& x = syn.data.view(d).values;
    const Eigen::MatrixXd cov = x.transpose() * x / 10000.0;
    const auto& w = syn.projections.weights[d];
    const Eigen::MatrixXd want =
        w * w.transpose() + 0.25 * Eigen::MatrixXd::Identity(w.rows(), w.rows());
    CHECK((cov - want).norm() < 0.08 * want.norm());
  }
}

TEST_CASE("single-view anomalies") {
  SingleViewOptions opt;
  Rng rng(11);
  const auto syn = gen_single_view_anomalies(opt, rng);
  const auto& labels = *syn.data.labels();
  CHECK(labels.size() == 100);
  CHECK(std::count(labels.begin(), labels.end(), true) == 5);
  CHECK(syn.data.n_views() == 2);
  CHECK(syn.data.view_dim(0) == 5);
  for (const auto& z : syn.latents) CHECK(z.cols() == 1);

  // mean squared norm of anomaly latents: scale * K (covariance) or scale^2 * K (sd)
  SingleViewOptions many;
  many.n_normal = 0;
  many.n_anomalous = 20000;
  for (auto mode : {ScaleMode::covariance, ScaleMode::standard_deviation}) {
    many.scale_mode = mode;
    Rng r(12);
    const auto big = gen_single_view_anomalies(many, r);
    double msq = 0.0;
    for (const auto& z : big.latents) msq += z.squaredNorm();
    msq /= 20000.0;
    const double s = many.variance_scale;
    const double want = (mode == ScaleMode::covariance ? s : s * s) * many.k_latent;
    CHECK(msq == doctest::Approx(want).epsilon(0.03));
  }
}

TEST_CASE("auc") {
  CHECK(auc({0.9, 0.1}, {true, false}) == 1.0);
  CHECK(auc({0.1, 0.9}, {true, false}) == 0.0);
  CHECK(auc({0.3, 0.3, 0.3}, {true, false, false}) == 0.5);
  CHECK(auc({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}) == 0.75);
  CHECK_THROWS_AS((void)auc({0.1, 0.2}, {true, true}), std::invalid_argument);

  Rng rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(30), t(30);
    std::vector<bool> l(30);
    for (std::size_t i = 0; i < 30; ++i) {
      s[i] = std::round(u(rng) * 10.0) / 10.0;
      t[i] = std::exp(3.0 * s[i]) - 7.0;
      l[i] = coin(rng);
    }
    l[0] = true;
    l[1] = false;
    // brute-force pair count
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 30; ++j)
        if (l[i] && !l[j]) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    const double a = auc(s, l);
    CHECK(a == doctest::Approx(wins / pairs).epsilon(1e-14));
    CHECK(auc(t, l) == doctest::Approx(a).epsilon(1e-14));
    CHECK((a >= 0.0 && a <= 1.0));
  }
}

TEST_CASE("summaries") {
  const auto s = summarize({1.0, 2.0, std::nullopt, 3.0});
  CHECK(s.count == 3);
  CHECK(s.mean == 2.0);
  CHECK(s.standard_error == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(summarize({std::nullopt}).count == 0);
  CHECK(summarize({4.0}).standard_error == 0.0);
}

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.n_instances = 20;
  spec.view_dim = 3;
  spec.k_star = 2;
  spec.hyper.k_latent = 2;
  spec.inference.n_sweeps = 6;
  spec.inference.burn_in = 2;
  spec.inference.warm_start_iters = 10;
  spec.seeds = {1, 2, 3};
  return spec;
}

}  // namespace

TEST_CASE("experiment report shape and determinism across thread counts") {
  auto spec = small_spec();
  spec.missing_fraction = 0.05;
  const auto one = run_experiment(spec);
  spec.jobs = 3;
  const auto many = run_experiment(spec);
  REQUIRE(one.per_seed.size() == 3);
  CHECK(one.failures() == 0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(one.per_seed[i].seed == spec.seeds[i]);
    CHECK(one.per_seed[i].auc_proposed == many.per_seed[i].auc_proposed);
    CHECK(one.per_seed[i].auc_pcca == many.per_seed[i].auc_pcca);
    CHECK(one.per_seed[i].mse_proposed == many.per_seed[i].mse_proposed);
    CHECK(one.per_seed[i].mse_average.has_value());
  }
  CHECK(one.auc_proposed.mean == many.auc_proposed.mean);
  CHECK(one.auc_proposed.count == 3);
  CHECK(one.auc_proposed.standard_error >= 0.0);
}

TEST_CASE("zero anomaly rate leaves AUC undefined") {
  auto spec = small_spec();
  spec.anomaly_rate = 0.0;
  spec.seeds = {1};
  const auto rep = run_experiment(spec);
  CHECK(rep.per_seed[0].ok);
  CHECK(!rep.per_seed[0].auc_proposed);
  CHECK(rep.auc_proposed.count == 0);
}

TEST_CASE("per-seed failures are recorded") {
  auto spec = small_spec();
  spec.anomaly_rate = 0.15;  // 3 anomalies: not an even count for swaps
  spec.source = DataSource::libsvm;
  spec.path = "/nonexistent.svm";
  CHECK_THROWS((void)run_experiment(spec));

  const std::string path = "bench_failures.svm";
  {
    std::ofstream out(path);
    for (int i = 0; i < 10; ++i) out << "1 1:" << i << " 2:" << (i * i) % 7 << " 3:" << i % 3 << "\n";
  }
  auto bad = small_spec();
  bad.source = DataSource::libsvm;
  bad.path = path;
  bad.anomaly_rate = 0.1;  // one anomaly cannot be paired
  bad.seeds = {1, 2};
  const auto rep = run_experiment(bad);
  CHECK(rep.per_seed.size() == 2);
  CHECK(rep.failures() == 2);
  CHECK(!rep.per_seed[0].error.empty());
}

TEST_CASE("experiment settings are validated") {
  auto spec = small_spec();
  spec.seeds.clear();
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.jobs = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.missing_fraction = 0.7;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
