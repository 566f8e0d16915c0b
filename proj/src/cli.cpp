#include "mvad/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mvad/bench.hpp"
#include "mvad/inference.hpp"
#include "mvad/missing.hpp"
#include "mvad/serialize.hpp"

namespace mvad::cli {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string input;
  std::size_t views = 2;
  double anomaly_rate = 0.0;
  double missing_frac = 0.0;
  std::string output_dir = ".";
  std::string output;
  std::string format;
  int jobs = 1;
  std::string model;
  std::string trace;
  Hyperparameters hyper;
  InferenceConfig inference;
};

void add_model_options(CLI::App& app, Options& o) {
  app.add_option("--k", o.hyper.k_latent, "Latent dimensionality")->capture_default_str();
  app.add_option("--gamma", o.hyper.gamma, "Concentration parameter")->capture_default_str();
  app.add_option("--a", o.hyper.a, "Gamma prior shape")->capture_default_str();
  app.add_option("--b", o.hyper.b, "Gamma prior rate")->capture_default_str();
  app.add_option("--r", o.hyper.r, "Latent precision")->capture_default_str();
  app.add_option("--sweeps", o.inference.n_sweeps, "Gibbs sweeps")->capture_default_str();
  app.add_option("--burn-in", o.inference.burn_in, "Discarded sweeps")->capture_default_str();
  app.add_option("--seed", o.inference.seed, "Random seed")->capture_default_str();
  app.add_option("--mstep-every", o.inference.mstep_every, "Sweeps between M-steps")
      ->capture_default_str();
  app.add_option("--mstep-iters", o.inference.mstep_max_iters, "L-BFGS iterations per M-step")
      ->capture_default_str();
  app.add_option("--warm-start-iters", o.inference.warm_start_iters,
                 "L-BFGS iterations before the first sweep")
      ->capture_default_str();
}

void add_data_options(CLI::App& app, Options& o, bool required) {
  auto* in = app.add_option("--input", o.input, "Dataset (.json) or LIBSVM file");
  if (required) in->required();
  app.add_option("--views", o.views, "Views to split a LIBSVM file into")->capture_default_str();
  app.add_option("--anomaly-rate", o.anomaly_rate, "Swap-anomaly rate injected into LIBSVM input")
      ->capture_default_str();
  app.add_option("--missing-frac", o.missing_frac, "Fraction of observed cells to hide")
      ->capture_default_str();
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

void prepare_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory: " + dir);
}

std::string output_path(const Options& o, const std::string& name) {
  return (fs::path(o.output_dir) / name).string();
}

Rng stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

bool is_json(const std::string& path) { return fs::path(path).extension() == ".json"; }

MultiViewDataset load_dataset(const Options& o) {
  require_file(o.input, "input");
  MultiViewDataset data = [&] {
    if (is_json(o.input)) return io::dataset_from_json(io::read_json_file(o.input));
    Rng rng = stream(o.inference.seed, 1);
    const LibsvmData raw = parse_libsvm(o.input);
    const MultiViewDataset split = split_views(raw.dense(), o.views, rng);
    if (o.anomaly_rate > 0.0) return inject_swap_anomalies(split, o.anomaly_rate, rng).data;
    return split;
  }();
  if (o.missing_frac > 0.0) {
    Rng rng = stream(o.inference.seed, 2);
    data = hide_cells(data, o.missing_frac, rng).masked;
  }
  return data;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    io::write_text_file(path, text);
}

// ---------------------------------------------------------------------------

int cmd_generate(const Options& o, const std::string& source, const ExperimentSpec& spec,
                 std::ostream& out) {
  ExperimentSpec s = spec;
  s.source = source == "single-view" ? DataSource::single_view : DataSource::synthetic_cca;
  s.n_views = o.views;
  s.anomaly_rate = o.anomaly_rate;
  s.single_view.n_views = o.views;
  const MultiViewDataset data = build_experiment_data(s, o.inference.seed);
  const std::string text = io::to_json(data).dump(1) + "\n";
  write_text(o.output, text, out);
  return kExitOk;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const MultiViewDataset data = load_dataset(o);
  prepare_output_dir(o.output_dir);
  const FitResult fit = run_stochastic_em(data, o.hyper, o.inference);
  io::write_json_file(output_path(o, "model.json"),
                      io::to_json(io::ModelArtifact{o.hyper, fit.proj, fit.final_log_likelihood,
                                                    o.inference.seed}));
  io::write_json_file(output_path(o, "trace.json"), io::to_json(fit.trace));
  out << "final_log_likelihood " << io::format_double(fit.final_log_likelihood) << '\n';
  return kExitOk;
}

int cmd_score(const Options& o, const std::string& method, std::ostream& out) {
  require_file(o.trace, "trace");
  const GibbsTrace trace = io::trace_from_json(io::read_json_file(o.trace));
  const std::vector<double> scores =
      method == "reconstruction" ? reconstruction_scores(trace) : anomaly_scores(trace).v;
  std::ostringstream csv;
  io::write_scores_csv(csv, scores);
  write_text(o.output, csv.str(), out);
  return kExitOk;
}

int cmd_impute(const Options& o, std::ostream& out) {
  const MultiViewDataset data = load_dataset(o);
  require_file(o.model, "model");
  const io::ModelArtifact model = io::model_from_json(io::read_json_file(o.model));
  ImputationResult result = [&] {
    if (!o.trace.empty()) {
      require_file(o.trace, "trace");
      return impute(data, model.proj, io::trace_from_json(io::read_json_file(o.trace)),
                    model.hyper);
    }
    return impute(data, model.proj, AssignmentState::single_block(data.n_instances(), data.n_views()),
                  model.hyper);
  }();
  write_text(o.output, io::to_json(result.filled).dump(1) + "\n", out);
  return kExitOk;
}

int cmd_select_k(const Options& o, const std::vector<int>& grid, const KSelectionOptions& kopt,
                 std::ostream& out) {
  const MultiViewDataset data = load_dataset(o);
  const KSelection sel = select_latent_dim(data, grid, o.hyper, o.inference, kopt);
  std::ostringstream text;
  if (o.format == "json") {
    nlohmann::json j = {{"selected_k", sel.selected_k}, {"k", sel.grid}, {"mse", sel.mse}};
    text << j.dump(1) << '\n';
  } else {
    text << "k,mse\n";
    for (std::size_t i = 0; i < sel.grid.size(); ++i)
      text << sel.grid[i] << ',' << io::format_double(sel.mse[i]) << '\n';
  }
  write_text(o.output, text.str(), out);
  if (!o.output.empty() && o.output != "-") out << "selected_k " << sel.selected_k << '\n';
  return kExitOk;
}

int cmd_benchmark(const Options& o, ExperimentSpec spec, const std::string& source, bool timings,
                  std::ostream& out, std::ostream& err) {
  if (source == "synthetic-cca") {
    spec.source = DataSource::synthetic_cca;
  } else if (source == "single-view") {
    spec.source = DataSource::single_view;
  } else {
    require_file(source, "benchmark source");
    spec.source = DataSource::libsvm;
    spec.path = source;
  }
  spec.n_views = o.views;
  spec.single_view.n_views = o.views;
  spec.anomaly_rate = o.anomaly_rate;
  spec.missing_fraction = o.missing_frac;
  spec.jobs = o.jobs;
  spec.hyper = o.hyper;
  spec.inference = o.inference;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  prepare_output_dir(o.output_dir);
  const MetricsReport report = run_experiment(spec);
  if (o.format.empty() || o.format == "csv") {
    std::ostringstream csv;
    io::write_report_csv(csv, report, timings);
    io::write_text_file(output_path(o, "report.csv"), csv.str());
  }
  if (o.format.empty() || o.format == "json")
    io::write_json_file(output_path(o, "report.json"), io::to_json(report, timings));

  for (const auto& m : report.per_seed)
    if (!m.ok) err << "seed " << m.seed << " failed: " << m.error << '\n';
  out << "seeds " << report.per_seed.size() << " failures " << report.failures() << '\n';
  return report.failures() == report.per_seed.size() ? kExitFailure : kExitOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const char* usage =
      "usage: mvad <command> [options]\n"
      "commands: generate, fit, score, impute, select-k, benchmark\n"
      "run 'mvad <command> --help' for options\n";
  if (args.empty()) {
    err << usage;
    return kExitUsage;
  }
  const std::string& command = args.front();
  if (command == "--help" || command == "-h" || command == "help") {
    out << usage;
    return kExitOk;
  }

  Options o;
  ExperimentSpec spec;
  std::string source = "synthetic-cca";
  std::string method = "proposed";
  std::vector<int> grid = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::uint64_t> seeds;
  int repeats = 0;
  bool timings = false;
  KSelectionOptions kopt;

  CLI::App app("mvad " + command);
  app.name("mvad " + command);
  app.set_config("--config", "", "Flat key=value file; keys mirror flag names");
  app.add_option("--output-dir", o.output_dir, "Directory for output files")->capture_default_str();
  app.add_option("--output", o.output, "Output file (stdout when omitted)");

  if (command == "generate") {
    app.add_option("--source", source, "synthetic-cca or single-view")
        ->check(CLI::IsMember({"synthetic-cca", "single-view"}))
        ->capture_default_str();
    app.add_option("--views", o.views, "Number of views")->capture_default_str();
    app.add_option("--anomaly-rate", o.anomaly_rate, "Anomaly rate (synthetic-cca)");
    app.add_option("--seed", o.inference.seed, "Random seed")->capture_default_str();
    app.add_option("--n-instances", spec.n_instances, "Instances (synthetic-cca)")
        ->capture_default_str();
    app.add_option("--view-dim", spec.view_dim, "Features per view (synthetic-cca)")
        ->capture_default_str();
    app.add_option("--k-star", spec.k_star, "True latent dimensionality (synthetic-cca)")
        ->capture_default_str();
    app.add_option("--noise-sd", spec.noise_sd, "Noise standard deviation")->capture_default_str();
  } else if (command == "fit") {
    add_data_options(app, o, true);
    add_model_options(app, o);
  } else if (command == "score") {
    app.add_option("--trace", o.trace, "Trace file written by fit")->required();
    app.add_option("--method", method, "proposed or reconstruction")
        ->check(CLI::IsMember({"proposed", "reconstruction"}))
        ->capture_default_str();
  } else if (command == "impute") {
    add_data_options(app, o, true);
    app.add_option("--model", o.model, "Model file written by fit")->required();
    app.add_option("--trace", o.trace, "Trace file with recorded assignments");
    app.add_option("--seed", o.inference.seed, "Seed for LIBSVM splitting and hiding")
        ->capture_default_str();
  } else if (command == "select-k") {
    add_data_options(app, o, true);
    add_model_options(app, o);
    app.add_option("--k-grid", grid, "Candidate latent dimensionalities")->delimiter(',');
    app.add_option("--holdout-frac", kopt.holdout_fraction, "Fraction of cells held out")
        ->capture_default_str();
    app.add_option("--tie-tolerance", kopt.tie_tolerance, "Relative MSE tolerance")
        ->capture_default_str();
    app.add_option("--holdout-seed", kopt.holdout_seed, "Seed of the held-out cells")
        ->capture_default_str();
    app.add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  } else if (command == "benchmark") {
    o.anomaly_rate = spec.anomaly_rate;
    app.add_option("--source", source, "synthetic-cca, single-view or a LIBSVM path")
        ->capture_default_str();
    add_model_options(app, o);
    app.add_option("--views", o.views, "Number of views")->capture_default_str();
    app.add_option("--anomaly-rate", o.anomaly_rate, "Anomaly rate")->capture_default_str();
    app.add_option("--missing-frac", o.missing_frac, "Fraction of cells held out for MSE")
        ->capture_default_str();
    app.add_option("--format", o.format, "csv or json (both when omitted)")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--jobs", o.jobs, "Seeds run in parallel")->capture_default_str();
    app.add_option("--seeds", seeds, "Explicit seed list")->delimiter(',');
    app.add_option("--repeats", repeats, "Use seeds 1..N");
    app.add_option("--n-instances", spec.n_instances, "Instances (synthetic-cca)")
        ->capture_default_str();
    app.add_option("--view-dim", spec.view_dim, "Features per view (synthetic-cca)")
        ->capture_default_str();
    app.add_option("--k-star", spec.k_star, "True latent dimensionality (synthetic-cca)")
        ->capture_default_str();
    app.add_option("--noise-sd", spec.noise_sd, "Noise standard deviation")->capture_default_str();
    app.add_flag("--no-pcca", [&](std::int64_t) { spec.run_pcca = false; }, "Skip the PCCA baseline");
    app.add_flag("--timings", timings, "Include runtimes (not reproducible)");
  } else {
    err << "unknown command: " << command << '\n' << usage;
    return kExitUsage;
  }

  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (command == "benchmark") {
    if (repeats < 0) throw UsageError("--repeats must be positive");
    if (!seeds.empty() && repeats > 0) throw UsageError("--seeds and --repeats are exclusive");
    if (repeats > 0) {
      seeds.clear();
      for (int s = 1; s <= repeats; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (!seeds.empty()) spec.seeds = seeds;
  }
  try {
    o.hyper.validate();
    o.inference.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  if (command == "generate") return cmd_generate(o, source, spec, out);
  if (command == "fit") return cmd_fit(o, out);
  if (command == "score") return cmd_score(o, method, out);
  if (command == "impute") return cmd_impute(o, out);
  if (command == "select-k") return cmd_select_k(o, grid, kopt, out);
  return cmd_benchmark(o, spec, source, timings, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const LibsvmParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mvad::cli
