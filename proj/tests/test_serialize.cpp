#include <doctest.h>

#include <sstream>

#include "mvad/serialize.hpp"
#include "support.hpp"

using namespace mvad;
using namespace mvad::testing;

TEST_CASE("dataset round-trip keeps values, mask and labels") {
  Rng rng(1);
  const auto data = random_dataset(5, {2, 3}, rng, 0.3).with_labels(
      std::vector<bool>{true, false, false, true, false});
  const auto back = io::dataset_from_json(nlohmann::json::parse(io::to_json(data).dump()));
  for (std::size_t d = 0; d < 2; ++d) {
    CHECK((back.view(d).observed == data.view(d).observed).all());
    const auto& v = data.view(d);
    for (Eigen::Index n = 0; n < v.values.rows(); ++n)
      for (Eigen::Index m = 0; m < v.values.cols(); ++m)
        if (v.observed(n, m)) CHECK(back.view(d).values(n, m) == v.values(n, m));
  }
  CHECK(back.labels() == data.labels());
}

TEST_CASE("model round-trip is bitwise") {
  Rng rng(2);
  const auto data = random_dataset(2, {3, 4}, rng);
  io::ModelArtifact model;
  model.hyper.k_latent = 3;
  model.hyper.gamma = 0.3;
  model.proj = random_projection(data, 3, rng);
  model.final_log_likelihood = -123.456789012345678;
  model.seed = 99;
  const auto back = io::model_from_json(nlohmann::json::parse(io::to_json(model).dump()));
  CHECK(back.proj.flatten() == model.proj.flatten());
  CHECK(back.hyper.gamma == 0.3);
  CHECK(back.final_log_likelihood == model.final_log_likelihood);
  CHECK(back.seed == 99);
}

TEST_CASE("format and shape errors") {
  CHECK_THROWS_AS((void)io::model_from_json(nlohmann::json{{"format", "other"}}), io::FormatError);
  nlohmann::json wrong_version = {{"format", "mvad-trace"}, {"version", 42}};
  CHECK_THROWS_AS((void)io::trace_from_json(wrong_version), io::FormatError);

  Rng rng(3);
  auto j = io::to_json(random_dataset(2, {2}, rng));
  j["views"][0]["values"][1].push_back(1.0);
  CHECK_THROWS_AS((void)io::dataset_from_json(j), io::FormatError);

  io::ModelArtifact model;
  model.hyper.k_latent = 2;
  model.proj.weights = {Eigen::MatrixXd::Ones(2, 3)};
  CHECK_THROWS_AS((void)io::model_from_json(io::to_json(model)), io::FormatError);
}

TEST_CASE("trace round-trip") {
  GibbsTrace t;
  t.n_sweeps = 5;
  t.burn_in = 3;
  t.n_instances = 2;
  t.n_views = 2;
  t.entries.push_back({4, {1, 2}, -10.5, {0.1, 0.2}, {{0, 0}, {0, 1}}});
  t.entries.push_back({5, {1, 1}, -9.25, {0.3, 0.4}, {}});
  const auto back = io::trace_from_json(nlohmann::json::parse(io::to_json(t).dump()));
  CHECK(back.entries.size() == 2);
  CHECK(back.entries[0].assignments == t.entries[0].assignments);
  CHECK(back.entries[1].assignments.empty());
  CHECK(back.entries[1].log_likelihood == -9.25);
  CHECK(anomaly_scores(back).v == anomaly_scores(t).v);

  auto j = io::to_json(t);
  j["sweeps"][0]["latent_counts"][1] = 3;
  CHECK_THROWS_AS((void)io::trace_from_json(j), io::FormatError);
}

TEST_CASE("report CSV has one row per seed plus the aggregate") {
  MetricsReport r;
  r.per_seed.resize(2);
  r.per_seed[0] = {1, true, "", 0.75, 0.5, std::nullopt, std::nullopt, std::nullopt, 1.0, 2.0};
  r.per_seed[1] = {2, false, "boom", std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                   std::nullopt, 0.0, 0.0};
  r.auc_proposed = summarize({0.75});
  std::ostringstream out;
  io::write_report_csv(out, r, false);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("seed,status,auc_proposed", 0) == 0);
  CHECK(rows[1].rfind("1,ok,0.75,0.5,,,", 0) == 0);
  CHECK(rows[2].rfind("2,failed,,", 0) == 0);
  CHECK(rows[3].rfind("aggregate,ok,0.75,", 0) == 0);
  CHECK(out.str().find("runtime") == std::string::npos);
  std::ostringstream timed;
  io::write_report_csv(timed, r, true);
  CHECK(timed.str().find("runtime_proposed_s") != std::string::npos);

  const auto j = io::to_json(r, false);
  CHECK(j["per_seed"][0]["mse_proposed"].is_null());
  CHECK(j["per_seed"][1]["error"] == "boom");
  CHECK(j["failures"] == 1);
}

TEST_CASE("doubles round-trip through text") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    const std::string s = io::format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(io::format_double(2.0) == "2");
}
