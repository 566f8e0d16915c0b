#include "mvad/serialize.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace mvad::io {

using nlohmann::json;

namespace {

void expect_format(const json& j, const char* name) {
  if (!j.is_object() || j.value("format", std::string()) != name)
    throw FormatError(std::string("not a ") + name + " document");
  const int version = j.value("version", -1);
  if (version != kFormatVersion)
    throw FormatError(std::string(name) + " version " + std::to_string(version) +
                      " is not supported");
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows)
    throw FormatError("matrix row count does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = data[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw FormatError("matrix column count does not match its shape");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const Summary& s) {
  if (s.count == 0) return nullptr;
  return {{"mean", s.mean}, {"standard_error", s.standard_error}, {"count", s.count}};
}

std::string csv_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string csv_cell(const Summary& s, bool se) {
  if (s.count == 0) return "";
  return format_double(se ? s.standard_error : s.mean);
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Dataset

json to_json(const MultiViewDataset& data) {
  json views = json::array();
  for (const auto& v : data.views()) {
    json rows = json::array();
    for (Eigen::Index n = 0; n < v.values.rows(); ++n) {
      json row = json::array();
      for (Eigen::Index m = 0; m < v.values.cols(); ++m)
        row.push_back(v.observed(n, m) ? json(v.values(n, m)) : json(nullptr));
      rows.push_back(std::move(row));
    }
    views.push_back({{"n_features", v.values.cols()}, {"values", std::move(rows)}});
  }
  json out = {{"format", "mvad-dataset"},
              {"version", kFormatVersion},
              {"n_instances", data.n_instances()},
              {"views", std::move(views)}};
  out["labels"] = data.labels() ? json(*data.labels()) : json(nullptr);
  return out;
}

MultiViewDataset dataset_from_json(const json& j) {
  expect_format(j, "mvad-dataset");
  const auto n = j.at("n_instances").get<Eigen::Index>();
  std::vector<ViewBlock> views;
  for (const auto& jv : j.at("views")) {
    const auto m = jv.at("n_features").get<Eigen::Index>();
    const auto& rows = jv.at("values");
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n)
      throw FormatError("view row count differs from n_instances");
    ViewBlock block;
    block.values.resize(n, m);
    block.observed.resize(n, m);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m)
        throw FormatError("view row length differs from n_features");
      for (Eigen::Index c = 0; c < m; ++c) {
        const auto& cell = row[static_cast<std::size_t>(c)];
        block.observed(r, c) = !cell.is_null();
        block.values(r, c) =
            cell.is_null() ? std::numeric_limits<double>::quiet_NaN() : cell.get<double>();
      }
    }
    views.push_back(std::move(block));
  }
  std::optional<std::vector<bool>> labels;
  if (j.contains("labels") && !j["labels"].is_null()) labels = j["labels"].get<std::vector<bool>>();
  try {
    return MultiViewDataset(std::move(views), std::move(labels));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Model

json to_json(const ModelArtifact& model) {
  json weights = json::array();
  for (const auto& w : model.proj.weights) weights.push_back(matrix_to_json(w));
  return {{"format", "mvad-model"},
          {"version", kFormatVersion},
          {"hyperparameters",
           {{"a", model.hyper.a},
            {"b", model.hyper.b},
            {"r", model.hyper.r},
            {"gamma", model.hyper.gamma},
            {"k_latent", model.hyper.k_latent}}},
          {"n_views", model.proj.n_views()},
          {"projections", std::move(weights)},
          {"final_log_likelihood", model.final_log_likelihood},
          {"seed", model.seed}};
}

ModelArtifact model_from_json(const json& j) {
  expect_format(j, "mvad-model");
  ModelArtifact model;
  const auto& h = j.at("hyperparameters");
  model.hyper.a = h.at("a").get<double>();
  model.hyper.b = h.at("b").get<double>();
  model.hyper.r = h.at("r").get<double>();
  model.hyper.gamma = h.at("gamma").get<double>();
  model.hyper.k_latent = h.at("k_latent").get<int>();
  model.hyper.validate();
  for (const auto& w : j.at("projections")) model.proj.weights.push_back(matrix_from_json(w));
  if (model.proj.n_views() != j.at("n_views").get<std::size_t>())
    throw FormatError("projection count differs from n_views");
  for (const auto& w : model.proj.weights)
    if (w.cols() != model.hyper.k_latent) throw FormatError("projection column count differs from k_latent");
  model.final_log_likelihood = j.at("final_log_likelihood").get<double>();
  model.seed = j.value("seed", std::uint64_t{0});
  return model;
}

// ---------------------------------------------------------------------------
// Trace

json to_json(const GibbsTrace& trace) {
  json sweeps = json::array();
  for (const auto& e : trace.entries) {
    json entry = {{"sweep", e.sweep},
                  {"latent_counts", e.latent_counts},
                  {"log_likelihood", e.log_likelihood},
                  {"reconstruction_error", e.reconstruction_error}};
    if (!e.assignments.empty()) entry["assignments"] = e.assignments;
    sweeps.push_back(std::move(entry));
  }
  return {{"format", "mvad-trace"},
          {"version", kFormatVersion},
          {"n_sweeps", trace.n_sweeps},
          {"burn_in", trace.burn_in},
          {"n_instances", trace.n_instances},
          {"n_views", trace.n_views},
          {"sweeps", std::move(sweeps)}};
}

GibbsTrace trace_from_json(const json& j) {
  expect_format(j, "mvad-trace");
  GibbsTrace trace;
  trace.n_sweeps = j.at("n_sweeps").get<int>();
  trace.burn_in = j.at("burn_in").get<int>();
  trace.n_instances = j.at("n_instances").get<std::size_t>();
  trace.n_views = j.at("n_views").get<std::size_t>();
  for (const auto& js : j.at("sweeps")) {
    TraceEntry e;
    e.sweep = js.at("sweep").get<int>();
    e.latent_counts = js.at("latent_counts").get<std::vector<int>>();
    e.log_likelihood = js.at("log_likelihood").get<double>();
    e.reconstruction_error = js.value("reconstruction_error", std::vector<double>{});
    if (js.contains("assignments"))
      e.assignments = js["assignments"].get<std::vector<std::vector<int>>>();
    if (e.latent_counts.size() != trace.n_instances)
      throw FormatError("trace sweep has the wrong instance count");
    for (int c : e.latent_counts)
      if (c < 1 || static_cast<std::size_t>(c) > std::max<std::size_t>(trace.n_views, 1))
        throw FormatError("trace latent count out of range");
    trace.entries.push_back(std::move(e));
  }
  if (trace.entries.empty()) throw FormatError("trace has no retained sweeps");
  return trace;
}

// ---------------------------------------------------------------------------
// Reports

json to_json(const MetricsReport& report, bool include_timings) {
  json seeds = json::array();
  for (const auto& m : report.per_seed) {
    json row = {{"seed", m.seed},
                {"ok", m.ok},
                {"auc_proposed", optional_number(m.auc_proposed)},
                {"auc_pcca", optional_number(m.auc_pcca)},
                {"mse_proposed", optional_number(m.mse_proposed)},
                {"mse_pcca", optional_number(m.mse_pcca)},
                {"mse_average", optional_number(m.mse_average)}};
    if (!m.ok) row["error"] = m.error;
    if (include_timings) {
      row["runtime_proposed_s"] = m.runtime_proposed;
      row["runtime_pcca_s"] = m.runtime_pcca;
    }
    seeds.push_back(std::move(row));
  }
  json aggregate = {{"auc_proposed", summary_json(report.auc_proposed)},
                    {"auc_pcca", summary_json(report.auc_pcca)},
                    {"mse_proposed", summary_json(report.mse_proposed)},
                    {"mse_pcca", summary_json(report.mse_pcca)},
                    {"mse_average", summary_json(report.mse_average)}};
  if (include_timings) {
    aggregate["runtime_proposed_s"] = summary_json(report.runtime_proposed);
    aggregate["runtime_pcca_s"] = summary_json(report.runtime_pcca);
  }
  return {{"format", "mvad-report"},
          {"version", kFormatVersion},
          {"per_seed", std::move(seeds)},
          {"aggregate", std::move(aggregate)},
          {"failures", report.failures()}};
}

void write_report_csv(std::ostream& out, const MetricsReport& report, bool include_timings) {
  out << "seed,status,auc_proposed,auc_pcca,mse_proposed,mse_pcca,mse_average";
  if (include_timings) out << ",runtime_proposed_s,runtime_pcca_s";
  out << ",auc_proposed_se,auc_pcca_se,mse_proposed_se,mse_pcca_se,mse_average_se";
  if (include_timings) out << ",runtime_proposed_s_se,runtime_pcca_s_se";
  out << '\n';
  const int se_columns = include_timings ? 7 : 5;
  for (const auto& m : report.per_seed) {
    out << m.seed << ',' << (m.ok ? "ok" : "failed") << ',' << csv_cell(m.auc_proposed) << ','
        << csv_cell(m.auc_pcca) << ',' << csv_cell(m.mse_proposed) << ',' << csv_cell(m.mse_pcca)
        << ',' << csv_cell(m.mse_average);
    if (include_timings)
      out << ',' << format_double(m.runtime_proposed) << ',' << format_double(m.runtime_pcca);
    for (int i = 0; i < se_columns; ++i) out << ',';
    out << '\n';
  }
  const Summary* means[] = {&report.auc_proposed, &report.auc_pcca, &report.mse_proposed,
                            &report.mse_pcca, &report.mse_average};
  out << "aggregate," << (report.failures() == report.per_seed.size() ? "failed" : "ok");
  for (const auto* s : means) out << ',' << csv_cell(*s, false);
  if (include_timings)
    out << ',' << csv_cell(report.runtime_proposed, false) << ','
        << csv_cell(report.runtime_pcca, false);
  for (const auto* s : means) out << ',' << csv_cell(*s, true);
  if (include_timings)
    out << ',' << csv_cell(report.runtime_proposed, true) << ','
        << csv_cell(report.runtime_pcca, true);
  out << '\n';
}

void write_scores_csv(std::ostream& out, const std::vector<double>& scores) {
  out << "instance,score\n";
  for (std::size_t n = 0; n < scores.size(); ++n) out << n << ',' << format_double(scores[n]) << '\n';
}

// ---------------------------------------------------------------------------
// Files

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

}  // namespace mvad::io
