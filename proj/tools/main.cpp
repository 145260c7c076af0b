#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "tscausal/emengine.hpp"
#include "tscausal/errors.hpp"
#include "tscausal/evaluation.hpp"
#include "tscausal/synthgen.hpp"

using namespace tscausal;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

struct GenerateArgs {
  std::string config_path;
  std::string name;
  int vars = 0;
  int edges = 0;
  int lag = 0;
  std::string function;
  std::string noise;
  double noise_scale = 0.0;
  int length = 0;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;
  std::string out_series;
  std::string out_graph;
  std::string out_weights;
  std::string out_config;

  CLI::Option* has_config = nullptr;
  CLI::Option* has_name = nullptr;
  CLI::Option* has_vars = nullptr;
  CLI::Option* has_edges = nullptr;
  CLI::Option* has_lag = nullptr;
  CLI::Option* has_function = nullptr;
  CLI::Option* has_noise = nullptr;
  CLI::Option* has_noise_scale = nullptr;
  CLI::Option* has_length = nullptr;
  CLI::Option* has_missing_rate = nullptr;
};

struct EmArgs {
  std::string config_path;
  std::string mode;
  double lambda = 0.0;
  bool lambda_grid = false;
  double gamma = 0.0;
  double alpha = 0.0;
  double tol = 0.0;
  int max_iters = 0;
  int max_lag = 0;
  int features = 0;
  double bandwidth = 0.0;
  bool identity_map = false;
  bool noise_injection = false;
  bool no_prune = false;
  std::uint64_t seed = 0;

  CLI::Option* has_config = nullptr;
  CLI::Option* has_mode = nullptr;
  CLI::Option* has_lambda = nullptr;
  CLI::Option* has_lambda_grid = nullptr;
  CLI::Option* has_gamma = nullptr;
  CLI::Option* has_alpha = nullptr;
  CLI::Option* has_tol = nullptr;
  CLI::Option* has_max_iters = nullptr;
  CLI::Option* has_max_lag = nullptr;
  CLI::Option* has_features = nullptr;
  CLI::Option* has_bandwidth = nullptr;
  CLI::Option* has_identity_map = nullptr;
  CLI::Option* has_noise_injection = nullptr;
  CLI::Option* has_no_prune = nullptr;
  CLI::Option* has_seed = nullptr;
};

void add_em_options(CLI::App* cmd, EmArgs& a) {
  a.has_config = cmd->add_option("--em-config", a.config_path, "JSON file with engine fields");
  a.has_mode = cmd->add_option("--mode", a.mode, "linear or kernel (default linear)");
  a.has_lambda = cmd->add_option("--lambda", a.lambda, "l1 strength (default 0.05)");
  a.has_lambda_grid =
      cmd->add_flag("--lambda-grid", a.lambda_grid, "pick lambda by holdout from the fixed grid");
  a.has_gamma = cmd->add_option("--gamma", a.gamma, "edge threshold on normalized weights");
  a.has_alpha = cmd->add_option("--alpha", a.alpha, "weight smoothing coefficient in [0,1]");
  a.has_tol = cmd->add_option("--tol", a.tol, "convergence tolerance");
  a.has_max_iters = cmd->add_option("--max-iters", a.max_iters, "iteration cap");
  a.has_max_lag = cmd->add_option("--max-lag", a.max_lag, "autoregressive order L");
  a.has_features = cmd->add_option("--features", a.features, "random feature count p");
  a.has_bandwidth =
      cmd->add_option("--bandwidth", a.bandwidth, "RBF bandwidth (0 = median heuristic)");
  a.has_identity_map =
      cmd->add_flag("--identity-map", a.identity_map, "kernel mode with the degenerate map");
  a.has_noise_injection = cmd->add_option("--noise-injection", a.noise_injection,
                                          "force residual-bootstrap imputation on or off");
  a.has_no_prune = cmd->add_flag("--no-prune", a.no_prune, "skip the edge pruning pass");
  a.has_seed = cmd->add_option("--seed", a.seed, "RNG seed (default 0)");
}

EmConfig build_em_config(const EmArgs& a) {
  EmConfig c;
  if (*a.has_config) c = parse_em_config_json(read_file(a.config_path));
  if (*a.has_mode) c.mode = em_mode_from_string(a.mode);
  if (*a.has_lambda) c.lambda = a.lambda;
  if (*a.has_lambda_grid) c.lambda_grid = a.lambda_grid;
  if (*a.has_gamma) c.gamma = a.gamma;
  if (*a.has_alpha) c.alpha = a.alpha;
  if (*a.has_tol) c.tol = a.tol;
  if (*a.has_max_iters) c.max_iters = a.max_iters;
  if (*a.has_max_lag) c.max_lag = a.max_lag;
  if (*a.has_features) c.num_features = a.features;
  if (*a.has_bandwidth) c.bandwidth = a.bandwidth;
  if (*a.has_identity_map) c.identity_map = a.identity_map;
  if (*a.has_noise_injection) c.noise_injection = a.noise_injection;
  if (*a.has_no_prune) c.prune = false;
  if (*a.has_seed) c.seed = a.seed;
  c.validate();
  return c;
}

int do_generate(const GenerateArgs& a) {
  SyntheticConfig cfg;
  if (*a.has_config) cfg = load_synthetic_config(a.config_path);
  if (*a.has_name) {
    SyntheticConfig named = parse_config_name(a.name);
    named.noise_scale = cfg.noise_scale;
    named.series_length = cfg.series_length;
    named.missing_rate = cfg.missing_rate;
    cfg = named;
  }
  if (*a.has_vars) cfg.num_vars = a.vars;
  if (*a.has_edges) cfg.num_edges = a.edges;
  if (*a.has_lag) cfg.max_lag = a.lag;
  if (*a.has_function) cfg.function_type = function_type_from_string(a.function);
  if (*a.has_noise) cfg.noise_family = noise_family_from_string(a.noise);
  if (*a.has_noise_scale) cfg.noise_scale = a.noise_scale;
  if (*a.has_length) cfg.series_length = a.length;
  if (*a.has_missing_rate) cfg.missing_rate = a.missing_rate;
  cfg.seed = a.seed;
  cfg.validate();

  const auto sys = generate(cfg);
  save_csv(sys.dataset, a.out_series);
  save_graph(sys.graph, sys.dataset.var_names, a.out_graph);
  if (!a.out_weights.empty()) save_weights(sys.weights, sys.dataset.var_names, a.out_weights);
  if (!a.out_config.empty()) write_file(a.out_config, to_json(cfg) + "\n");

  std::cout << cfg.name() << ": " << sys.dataset.rows() << " rows, "
            << sys.graph.edge_count() << " edges, missing fraction "
            << sys.dataset.missing_fraction() << "\n";
  return 0;
}

int do_discover(const EmArgs& em_args, const std::string& series_path,
                const std::string& out_graph, const std::string& out_weights,
                const std::string& out_diagnostics, const std::string& out_imputed) {
  const EmConfig config = build_em_config(em_args);
  const auto series = load_csv(series_path);
  const auto res = run(series, config);

  save_graph(res.graph, series.var_names, out_graph);
  if (!out_weights.empty()) save_weights(res.weights, series.var_names, out_weights);
  if (!out_diagnostics.empty()) write_file(out_diagnostics, diagnostics_json_lines(res.state.history));
  if (!out_imputed.empty()) save_csv(res.state.completed, out_imputed);

  std::cout << "discovered " << res.graph.edge_count() << " lagged edges in "
            << res.state.iteration << " iterations ("
            << (res.state.converged ? "converged" : "iteration cap reached") << ")\n";
  return 0;
}

int do_evaluate(const std::string& estimate_path, const std::string& truth_path,
                const std::string& level, const std::string& out_path) {
  const auto rep =
      evaluate_graph_files(estimate_path, truth_path, metric_level_from_string(level));
  const auto text = to_json(rep) + "\n";
  if (!out_path.empty()) write_file(out_path, text);
  std::cout << text;
  return 0;
}

int do_benchmark(const std::string& suite_path, const std::string& out_dir,
                 std::uint64_t seed) {
  BenchmarkSuite suite = load_benchmark_suite(suite_path);
  suite.base_seed = seed;
  const auto outcome = run_benchmark(suite, out_dir);
  std::cout << aggregate_csv(outcome.cells);
  if (outcome.failed_runs > 0) {
    std::cerr << outcome.failed_runs << " run(s) failed\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EM-based imputation and sparse causal graph discovery for time series"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Sample a synthetic system, write series and truth");
  GenerateArgs ga;
  ga.has_config = gen->add_option("--config", ga.config_path, "JSON file with generator fields");
  ga.has_name = gen->add_option(
      "--name", ga.name, "dataset tag, e.g. LR-gaussian-10-10-2 (10-10-LR-gaussian-2 also accepted)");
  ga.has_vars = gen->add_option("--vars", ga.vars, "variable count");
  ga.has_edges = gen->add_option("--edges", ga.edges, "lagged edge count");
  ga.has_lag = gen->add_option("--lag", ga.lag, "maximum lag");
  ga.has_function = gen->add_option("--function", ga.function, "LR, SIN, TANH or SIGMOID");
  ga.has_noise = gen->add_option("--noise", ga.noise, "gaussian or laplace");
  ga.has_noise_scale = gen->add_option("--noise-scale", ga.noise_scale, "noise scale");
  ga.has_length = gen->add_option("--length", ga.length, "series length T");
  ga.has_missing_rate = gen->add_option("--missing-rate", ga.missing_rate, "MCAR rate in [0,1)");
  gen->add_option("--seed", ga.seed, "RNG seed")->required();
  gen->add_option("--out-series", ga.out_series, "output series CSV")->required();
  gen->add_option("--out-graph", ga.out_graph, "output truth graph JSON")->required();
  gen->add_option("--out-weights", ga.out_weights, "output truth weights JSON");
  gen->add_option("--out-config", ga.out_config, "write the resolved config JSON");

  auto* disc = app.add_subcommand("discover", "Run joint imputation and graph discovery");
  EmArgs da;
  std::string d_series, d_out_graph, d_out_weights, d_out_diag, d_out_imputed;
  disc->add_option("--series", d_series, "input series CSV")->required();
  add_em_options(disc, da);
  disc->add_option("--out-graph", d_out_graph, "output graph JSON")->required();
  disc->add_option("--out-weights", d_out_weights, "output weight tensor JSON");
  disc->add_option("--out-diagnostics", d_out_diag, "per-iteration JSON-lines log");
  disc->add_option("--out-imputed", d_out_imputed, "completed series CSV");

  auto* ev = app.add_subcommand("evaluate", "Score an estimated graph against a truth graph");
  std::string e_estimate, e_truth, e_level = "summary", e_out;
  ev->add_option("--estimate", e_estimate, "estimated graph JSON")->required();
  ev->add_option("--truth", e_truth, "truth graph JSON")->required();
  ev->add_option("--level", e_level, "summary or lagged (default summary)");
  ev->add_option("--out", e_out, "also write the report JSON here");

  auto* bench = app.add_subcommand("benchmark", "Run a suite of generate-discover-score cells");
  std::string b_suite, b_out_dir;
  std::uint64_t b_seed = 0;
  bench->add_option("--suite", b_suite, "suite config JSON")->required();
  bench->add_option("--out-dir", b_out_dir, "report output directory")->required();
  bench->add_option("--seed", b_seed, "base seed; run r uses base + r")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are validation errors
  }

  try {
    if (gen->parsed()) return do_generate(ga);
    if (disc->parsed())
      return do_discover(da, d_series, d_out_graph, d_out_weights, d_out_diag, d_out_imputed);
    if (ev->parsed()) return do_evaluate(e_estimate, e_truth, e_level, e_out);
    if (bench->parsed()) return do_benchmark(b_suite, b_out_dir, b_seed);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
