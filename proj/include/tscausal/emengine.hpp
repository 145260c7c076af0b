#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tscausal/dataset.hpp"
#include "tscausal/kernelmap.hpp"
#include "tscausal/sparsereg.hpp"

namespace tscausal {

enum class EmMode { linear, kernel };

EmMode em_mode_from_string(const std::string& s);
std::string to_string(EmMode mode);

struct EmConfig {
  int max_iters = 50;
  double tol = 1e-3;    // convergence bound on max(impute_delta, weight_delta)
  double alpha = 0.5;   // smoothing: W_k = alpha W_{k-1} + (1-alpha) What_k
  double gamma = 0.1;   // edge threshold on per-lag max-abs normalized weights
  EmMode mode = EmMode::linear;
  std::optional<bool> noise_injection;  // unset: true in kernel mode with a
                                        // real feature map, false otherwise
  bool prune = true;
  double lambda = 0.05;
  bool lambda_grid = false;  // pick lambda from {0.01,0.05,0.1,0.2} by holdout
  int max_lag = 2;
  int num_features = 200;  // kernel feature count p
  double bandwidth = 0.0;  // RBF bandwidth; 0 = median heuristic
  bool identity_map = false;  // kernel mode with phi(x) = x, for equivalence checks
  std::uint64_t seed = 0;

  bool injection_enabled() const {
    return noise_injection.value_or(mode == EmMode::kernel && !identity_map);
  }
  void validate() const;
};

/// JSON object with EmConfig field names (mode and noise_injection as
/// strings/bools). Unknown keys are rejected.
EmConfig parse_em_config_json(const std::string& json_text);
std::string to_json(const EmConfig& config);

struct IterationDiagnostics {
  int iteration = 0;
  double impute_delta = 0.0;
  double weight_delta = 0.0;
  double objective = 0.0;
  long nnz_edges = 0;
};

/// One JSON object per line, one line per recorded iteration.
std::string diagnostics_json_lines(const std::vector<IterationDiagnostics>& history);

struct EmState {
  int iteration = 0;
  // Imputed copy. Every value is usable; .mask still holds the original
  // observation flags so later steps know which entries may be rewritten.
  TimeSeriesDataset completed;
  LagWeightTensor smoothed_weights;  // W_k, unnormalized
  LagWeightTensor raw_weights;       // What_k
  FittedModel model;
  bool model_fitted = false;
  LagGraph graph;
  double impute_delta = 0.0;
  double weight_delta = 0.0;
  bool converged = false;

  // frozen at initialize
  KernelFeatureMap map;
  SensitivityMatrix sens;
  double lambda = 0.05;

  std::vector<IterationDiagnostics> history;
};

/// Missing entries filled by per-variable linear interpolation between the
/// nearest observed neighbors (column mean of observed entries at the
/// boundaries); builds the feature map and freezes lambda (grid holdout runs
/// once, against the initial fill).
EmState initialize(const TimeSeriesDataset& dataset, const EmConfig& config);

/// Refits the sparse model on state.completed, projects to raw_weights and
/// advances the iteration counter.
EmState m_step(EmState state, const EmConfig& config);

/// Applies the exponential smoothing recursion (iteration 1 copies raw) and
/// rebuilds the graph by thresholding per-lag max-abs normalized weights.
EmState smooth_and_threshold(EmState state, const EmConfig& config);

/// Forward sweep over t: every originally-missing entry at row t is replaced
/// by the model prediction from the current lag window (rows updated earlier
/// in the sweep are read in their updated form). Noise injection adds a
/// bootstrap draw from the per-variable empirical residual pool, seeded by
/// (iteration, t, i). Missing entries in the first max_lag rows keep their
/// initialization values. At iteration 0 the call is a no-op.
EmState e_step(EmState state, const EmConfig& config);

/// Single-pass per-target parent test: unpenalized refit on the current
/// parents (linear/identity: OLS drop-one column; kernel: ridge 1e-6 on
/// per-parent univariate cosine-feature blocks), removing edges whose
/// F-test p-value exceeds 0.001 or whose removal raises RSS by less than
/// a 1e-3 fraction.
EmState prune(EmState state, const EmConfig& config);

struct EmResult {
  LagGraph graph;
  LagWeightTensor weights;  // final smoothed weights
  EmState state;
};

/// initialize, then m_step / smooth_and_threshold / e_step until
/// max(impute_delta, weight_delta) < tol or max_iters; prune once at the end.
EmResult run(const TimeSeriesDataset& dataset, const EmConfig& config);

}  // namespace tscausal
