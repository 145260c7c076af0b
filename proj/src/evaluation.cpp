#include "tscausal/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "tscausal/errors.hpp"

namespace tscausal {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_square_pair(const BoolMatrix& a, const BoolMatrix& b) {
  if (a.rows() != a.cols()) throw ValidationError("graph matrix must be square");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError("graph shapes differ");
}

json read_json_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace

MetricLevel metric_level_from_string(const std::string& s) {
  if (s == "summary") return MetricLevel::summary;
  if (s == "lagged") return MetricLevel::lagged;
  throw ValidationError("unknown metric level: " + s + " (expected summary or lagged)");
}

std::string to_string(MetricLevel level) {
  return level == MetricLevel::summary ? "summary" : "lagged";
}

F1Result f1_score(const BoolMatrix& estimated, const BoolMatrix& truth) {
  check_square_pair(estimated, truth);
  F1Result r;
  r.tp = (estimated.array() && truth.array()).count();
  r.fp = (estimated.array() && !truth.array()).count();
  r.fn = (!estimated.array() && truth.array()).count();
  r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  const double denom = r.precision + r.recall;
  r.f1 = denom > 0.0 ? 2.0 * r.precision * r.recall / denom : 0.0;
  return r;
}

long shd(const BoolMatrix& estimated, const BoolMatrix& truth) {
  check_square_pair(estimated, truth);
  const Eigen::Index d = estimated.rows();
  long count = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (estimated(i, i) != truth(i, i)) ++count;  // self-loops cannot reverse
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const bool e_ij = estimated(i, j), e_ji = estimated(j, i);
      const bool t_ij = truth(i, j), t_ji = truth(j, i);
      const int diff = static_cast<int>(e_ij != t_ij) + static_cast<int>(e_ji != t_ji);
      if (diff == 2 && e_ij != e_ji && t_ij != t_ji)
        count += 1;  // single directed edge with flipped orientation
      else
        count += diff;
    }
  }
  return count;
}

EvalReport score_graphs(const LagGraph& estimated, const LagGraph& truth, MetricLevel level) {
  EvalReport rep;
  rep.level = level;
  if (level == MetricLevel::summary) {
    const BoolMatrix est = summarize(estimated.adjacency);
    const BoolMatrix tru = summarize(truth.adjacency);
    const auto f = f1_score(est, tru);
    rep.f1 = f.f1;
    rep.precision = f.precision;
    rep.recall = f.recall;
    rep.tp = f.tp;
    rep.fp = f.fp;
    rep.fn = f.fn;
    rep.shd = shd(est, tru);
    return rep;
  }
  if (estimated.max_lag() != truth.max_lag())
    throw ValidationError("lagged-level scoring needs matching max_lag");
  for (int tau = 1; tau <= estimated.max_lag(); ++tau) {
    const auto f = f1_score(estimated.lag(tau), truth.lag(tau));
    rep.tp += f.tp;
    rep.fp += f.fp;
    rep.fn += f.fn;
    rep.shd += shd(estimated.lag(tau), truth.lag(tau));
  }
  rep.precision = rep.tp + rep.fp > 0
                      ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp)
                      : 0.0;
  rep.recall = rep.tp + rep.fn > 0
                   ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn)
                   : 0.0;
  const double denom = rep.precision + rep.recall;
  rep.f1 = denom > 0.0 ? 2.0 * rep.precision * rep.recall / denom : 0.0;
  return rep;
}

std::string to_json(const EvalReport& report) {
  const json j = {{"f1", report.f1},
                  {"precision", report.precision},
                  {"recall", report.recall},
                  {"shd", report.shd},
                  {"tp", report.tp},
                  {"fp", report.fp},
                  {"fn", report.fn},
                  {"level", to_string(report.level)},
                  {"config_name", report.config_name},
                  {"missing_rate", report.missing_rate},
                  {"seed", report.seed}};
  return j.dump(2);
}

BenchmarkSuite parse_benchmark_suite_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid suite JSON: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "base_seed" && key != "level" && key != "cells")
      throw ValidationError("unknown suite key: " + key);
  }
  BenchmarkSuite suite;
  if (j.contains("base_seed")) suite.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("level"))
    suite.level = metric_level_from_string(j.at("level").get<std::string>());
  if (!j.contains("cells") || !j.at("cells").is_array() || j.at("cells").empty())
    throw ValidationError("suite needs a non-empty cells array");
  for (const auto& cj : j.at("cells")) {
    for (const auto& [key, value] : cj.items()) {
      (void)value;
      if (key != "data" && key != "em" && key != "repetitions")
        throw ValidationError("unknown cell key: " + key);
    }
    BenchmarkCell cell;
    if (!cj.contains("data")) throw ValidationError("cell needs a data config");
    cell.data = parse_synthetic_config_json(cj.at("data").dump());
    if (cj.contains("em")) cell.em = parse_em_config_json(cj.at("em").dump());
    if (cj.contains("repetitions")) cell.repetitions = cj.at("repetitions").get<int>();
    if (cell.repetitions < 1) throw ValidationError("repetitions must be >= 1");
    suite.cells.push_back(std::move(cell));
  }
  return suite;
}

BenchmarkSuite load_benchmark_suite(const std::string& path) {
  return parse_benchmark_suite_json(read_json_document(path).dump());
}

std::string aggregate_csv(const std::vector<CellSummary>& cells) {
  std::string out =
      "config,missing_rate,mode,requested,completed,mean_f1,mean_precision,mean_recall,"
      "mean_shd\n";
  for (const auto& c : cells) {
    out += c.config_name;
    out += ',';
    out += fmt(c.missing_rate);
    out += ',';
    out += c.mode;
    out += ',';
    out += std::to_string(c.requested);
    out += ',';
    out += std::to_string(c.completed);
    out += ',';
    out += fmt(c.mean_f1);
    out += ',';
    out += fmt(c.mean_precision);
    out += ',';
    out += fmt(c.mean_recall);
    out += ',';
    out += fmt(c.mean_shd);
    out += '\n';
  }
  return out;
}

BenchmarkOutcome run_benchmark(const BenchmarkSuite& suite, const std::string& output_dir) {
  if (suite.cells.empty()) throw ValidationError("benchmark suite has no cells");
  std::filesystem::create_directories(output_dir);

  BenchmarkOutcome out;
  std::uint64_t run_index = 0;
  for (size_t ci = 0; ci < suite.cells.size(); ++ci) {
    const auto& cell = suite.cells[ci];
    CellSummary cs;
    cs.config_name = cell.data.name();
    cs.missing_rate = cell.data.missing_rate;
    cs.mode = to_string(cell.em.mode);
    cs.requested = cell.repetitions;
    double sum_f1 = 0.0, sum_p = 0.0, sum_r = 0.0, sum_shd = 0.0;
    for (int r = 0; r < cell.repetitions; ++r, ++run_index) {
      const std::uint64_t seed = suite.base_seed + run_index;
      try {
        SyntheticConfig data = cell.data;
        data.seed = seed;
        EmConfig em = cell.em;
        em.seed = seed;
        const auto sys = generate(data);
        const auto res = run(sys.dataset, em);
        auto rep = score_graphs(res.graph, sys.graph, suite.level);
        rep.config_name = cs.config_name;
        rep.missing_rate = data.missing_rate;
        rep.seed = seed;
        write_text_file(output_dir + "/run_" + std::to_string(ci) + "_" + std::to_string(r) +
                            ".json",
                        to_json(rep) + "\n");
        sum_f1 += rep.f1;
        sum_p += rep.precision;
        sum_r += rep.recall;
        sum_shd += static_cast<double>(rep.shd);
        cs.completed += 1;
        out.reports.push_back(std::move(rep));
      } catch (const std::exception& e) {
        std::cerr << "benchmark cell " << ci << " repetition " << r << " failed: " << e.what()
                  << "\n";
        out.failed_runs += 1;
      }
    }
    const double n = cs.completed;
    cs.mean_f1 = cs.completed ? sum_f1 / n : std::nan("");
    cs.mean_precision = cs.completed ? sum_p / n : std::nan("");
    cs.mean_recall = cs.completed ? sum_r / n : std::nan("");
    cs.mean_shd = cs.completed ? sum_shd / n : std::nan("");
    out.cells.push_back(std::move(cs));
  }
  write_text_file(output_dir + "/aggregate.csv", aggregate_csv(out.cells));
  return out;
}

namespace {

// Re-express a loaded graph in the order given by target_names (a permutation
// of the graph's own variable names).
LagGraph align_to_names(const LoadedGraph& loaded, const std::vector<std::string>& target_names,
                        const std::string& what) {
  if (loaded.var_names.size() != target_names.size())
    throw ValidationError(what + " disagrees on variable count");
  std::vector<Eigen::Index> position(loaded.var_names.size());
  for (size_t k = 0; k < loaded.var_names.size(); ++k) {
    const auto it = std::find(target_names.begin(), target_names.end(), loaded.var_names[k]);
    if (it == target_names.end())
      throw ValidationError(what + " variable '" + loaded.var_names[k] + "' has no counterpart");
    position[k] = it - target_names.begin();
  }
  const auto d = static_cast<Eigen::Index>(target_names.size());
  LagGraph out = LagGraph::empty(loaded.graph.max_lag(), static_cast<int>(d));
  for (int tau = 1; tau <= loaded.graph.max_lag(); ++tau)
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        if (loaded.graph.lag(tau)(i, j)) out.lag(tau)(position[i], position[j]) = true;
  out.refresh_summary();
  return out;
}

}  // namespace

EvalReport evaluate_external(const std::string& series_path, const std::string& truth_path,
                             const EmConfig& config, MetricLevel level) {
  const auto series = load_csv(series_path);
  const auto truth = align_to_names(load_graph(truth_path), series.var_names, "truth graph");

  const auto res = run(series, config);
  auto rep = score_graphs(res.graph, truth, level);
  rep.config_name = series_path;
  rep.missing_rate = series.missing_fraction();
  rep.seed = config.seed;
  return rep;
}

EvalReport evaluate_graph_files(const std::string& estimate_path, const std::string& truth_path,
                                MetricLevel level) {
  const auto estimate = load_graph(estimate_path);
  const auto truth = align_to_names(load_graph(truth_path), estimate.var_names, "truth graph");
  auto rep = score_graphs(estimate.graph, truth, level);
  rep.config_name = estimate_path;
  return rep;
}

}  // namespace tscausal
