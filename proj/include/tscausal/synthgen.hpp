#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "tscausal/dataset.hpp"

namespace tscausal {

enum class FunctionType { LR, SIN, TANH, SIGMOID };

FunctionType function_type_from_string(const std::string& s);
std::string to_string(FunctionType f);

/// Element-wise mechanism applied to each parent value before weighting.
double apply_function(FunctionType f, double x);

struct SyntheticConfig {
  int num_vars = 10;
  int num_edges = 10;
  int max_lag = 2;
  FunctionType function_type = FunctionType::LR;
  NoiseFamily noise_family = NoiseFamily::gaussian;
  double noise_scale = 1.0;  // 0 gives a deterministic system, used by oracles
  int series_length = 1000;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;
  std::pair<double, double> weight_range{0.3, 0.9};

  void validate() const;

  /// Tag string {FUNC}-{noise}-{d}-{e}-{L}, e.g. "TANH-laplace-10-20-2".
  std::string name() const;
};

/// Accepts both tag orderings, FUNC-noise-d-e-L and the d-e-FUNC-noise-L
/// alias. Only the five tag fields are set; the rest keep their defaults.
SyntheticConfig parse_config_name(const std::string& name);

/// JSON object with SyntheticConfig field names; a "name" key may supply the
/// five tag fields, explicit keys override it. Unknown keys are rejected.
SyntheticConfig parse_synthetic_config_json(const std::string& json_text);
SyntheticConfig load_synthetic_config(const std::string& path);
std::string to_json(const SyntheticConfig& config);

struct GeneratedSystem {
  LagGraph graph;
  LagWeightTensor weights;
};

/// Samples num_edges lagged (target, source, lag) slots uniformly without
/// replacement, draws weights uniformly from +-[low, high], then rescales all
/// weights until the companion-matrix spectral radius is at most 0.9.
GeneratedSystem generate_lag_graph(const SyntheticConfig& config);

/// X_i^t = sum_tau sum_j W^(tau)_ij f(X_j^{t-tau}) + eps_i^t with the first
/// max_lag rows drawn from the noise family and 10*max_lag burn-in rows
/// discarded. Throws once any |value| exceeds 1e8.
TimeSeriesDataset simulate_series(const LagGraph& graph, const LagWeightTensor& weights,
                                  const SyntheticConfig& config);

/// Composes a fresh Bernoulli(missing_rate) mask into the existing one,
/// resampling (up to 1000 times) until every column keeps at least one
/// observed entry. Values at masked entries stay in .values so synthetic
/// ground truth remains recoverable; the mask flags them unknown.
TimeSeriesDataset apply_mcar_mask(const TimeSeriesDataset& dataset, double missing_rate,
                                  std::uint64_t seed);

struct SyntheticDataset {
  TimeSeriesDataset dataset;  // masked
  LagGraph graph;
  LagWeightTensor weights;
};

/// generate_lag_graph + simulate_series + apply_mcar_mask, with independent
/// sub-streams derived from config.seed.
SyntheticDataset generate(const SyntheticConfig& config);

/// Largest eigenvalue magnitude of the VAR companion form of the tensor.
double companion_spectral_radius(const LagWeightTensor& weights);

}  // namespace tscausal
