#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tscausal/dataset.hpp"
#include "tscausal/emengine.hpp"
#include "tscausal/synthgen.hpp"

namespace tscausal {

enum class MetricLevel { summary, lagged };

MetricLevel metric_level_from_string(const std::string& s);
std::string to_string(MetricLevel level);

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

/// Directed-entry confusion counts over the full d x d grid, diagonal
/// included. Undefined ratios (0/0) are reported as 0.
F1Result f1_score(const BoolMatrix& estimated, const BoolMatrix& truth);

/// Structural Hamming distance: additions + deletions + reversals. A pair
/// wrong in both directions counts as one reversal when the orientation is
/// flipped and as two edits otherwise.
long shd(const BoolMatrix& estimated, const BoolMatrix& truth);

struct EvalReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  long shd = 0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  MetricLevel level = MetricLevel::summary;
  std::string config_name;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Summary level compares the collapsed any-lag graphs; lagged level sums the
/// per-lag confusion counts and distances (max_lag must match).
EvalReport score_graphs(const LagGraph& estimated, const LagGraph& truth, MetricLevel level);

std::string to_json(const EvalReport& report);

struct BenchmarkCell {
  SyntheticConfig data;
  EmConfig em;
  int repetitions = 3;
};

struct BenchmarkSuite {
  std::vector<BenchmarkCell> cells;
  MetricLevel level = MetricLevel::summary;
  std::uint64_t base_seed = 0;
};

/// Suite JSON: {"base_seed": n, "level": "summary", "cells": [{"data": {...},
/// "em": {...}, "repetitions": 3}, ...]}. Unknown keys are rejected.
BenchmarkSuite parse_benchmark_suite_json(const std::string& json_text);
BenchmarkSuite load_benchmark_suite(const std::string& path);

struct CellSummary {
  std::string config_name;
  double missing_rate = 0.0;
  std::string mode;
  int requested = 0;
  int completed = 0;
  double mean_f1 = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_shd = 0.0;
};

struct BenchmarkOutcome {
  std::vector<EvalReport> reports;  // successful runs in execution order
  std::vector<CellSummary> cells;
  long failed_runs = 0;
};

std::string aggregate_csv(const std::vector<CellSummary>& cells);

/// For every cell and repetition r: generate with seed base_seed + run_index,
/// discover, score. Failures are logged to stderr and skipped. Writes one
/// report JSON per successful run plus aggregate.csv into output_dir.
BenchmarkOutcome run_benchmark(const BenchmarkSuite& suite, const std::string& output_dir);

/// Loads a series CSV and a truth graph JSON (variable names must agree as
/// sets; the truth is reordered to the series order), runs discovery and
/// scores the result.
EvalReport evaluate_external(const std::string& series_path, const std::string& truth_path,
                             const EmConfig& config, MetricLevel level = MetricLevel::summary);

/// Loads an estimated and a truth graph JSON and scores them, aligning the
/// truth's variables to the estimate's order by name.
EvalReport evaluate_graph_files(const std::string& estimate_path, const std::string& truth_path,
                                MetricLevel level = MetricLevel::summary);

}  // namespace tscausal
