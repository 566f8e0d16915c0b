#pragma once

// File formats: datasets, fitted models, Gibbs traces (JSON) and reports (CSV/JSON).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvad/bench.hpp"
#include "mvad/dataset.hpp"
#include "mvad/inference.hpp"
#include "mvad/missing.hpp"
#include "mvad/model.hpp"

namespace mvad::io {

inline constexpr int kFormatVersion = 1;

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelArtifact {
  Hyperparameters hyper;
  ProjectionSet proj;
  double final_log_likelihood = 0.0;
  std::uint64_t seed = 0;
};

[[nodiscard]] nlohmann::json to_json(const MultiViewDataset& data);
[[nodiscard]] MultiViewDataset dataset_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const ModelArtifact& model);
[[nodiscard]] ModelArtifact model_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const GibbsTrace& trace);
[[nodiscard]] GibbsTrace trace_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const MetricsReport& report, bool include_timings);
/// One row per seed plus one aggregate row (means; *_se columns hold standard errors).
void write_report_csv(std::ostream& out, const MetricsReport& report, bool include_timings);

void write_scores_csv(std::ostream& out, const std::vector<double>& scores);

[[nodiscard]] nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);
void write_text_file(const std::string& path, const std::string& text);

/// Formats a double so that it parses back to the same value.
[[nodiscard]] std::string format_double(double v);

}  // namespace mvad::io
