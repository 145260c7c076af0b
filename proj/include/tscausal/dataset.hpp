#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tscausal/errors.hpp"
#include "tscausal/rng.hpp"

namespace tscausal {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Partially observed multivariate time series. mask(t, i) is true where
/// X_i at step t was observed; a false entry carries no meaning until imputed.
struct TimeSeriesDataset {
  Matrix values;                       // T x d
  BoolMatrix mask;                     // T x d, true = observed
  std::vector<std::string> var_names;  // d unique identifiers

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  double missing_fraction() const;

  /// Shape and uniqueness invariants; throws ValidationError on violation.
  void validate() const;
};

std::vector<std::string> default_var_names(int d);

/// L stacked d x d matrices of continuous causal-strength estimates.
/// lag(tau)(i, j) is the influence of X_j at lag tau on X_i, tau in [1, L].
struct LagWeightTensor {
  std::vector<Matrix> lags;

  static LagWeightTensor zero(int max_lag, int dim);

  int max_lag() const { return static_cast<int>(lags.size()); }
  Eigen::Index dim() const { return lags.empty() ? 0 : lags.front().rows(); }
  const Matrix& lag(int tau) const { return lags.at(static_cast<size_t>(tau - 1)); }
  Matrix& lag(int tau) { return lags.at(static_cast<size_t>(tau - 1)); }

  double max_abs() const;
  bool all_finite() const;
};

/// Binary lagged graph plus its summary: summary(i, j) is true iff some lag
/// has an edge from X_j to X_i. Self-loops on the diagonal are legal.
struct LagGraph {
  std::vector<BoolMatrix> adjacency;  // L x d x d
  BoolMatrix summary;                 // d x d

  static LagGraph empty(int max_lag, int dim);

  int max_lag() const { return static_cast<int>(adjacency.size()); }
  Eigen::Index dim() const { return adjacency.empty() ? 0 : adjacency.front().rows(); }
  const BoolMatrix& lag(int tau) const { return adjacency.at(static_cast<size_t>(tau - 1)); }
  BoolMatrix& lag(int tau) { return adjacency.at(static_cast<size_t>(tau - 1)); }

  long edge_count() const;  // lagged edges, all lags
  void refresh_summary();
};

/// Element-wise OR over the lag axis. Requires at least one lag slice.
BoolMatrix summarize(const std::vector<BoolMatrix>& adjacency);

enum class NoiseFamily { gaussian, laplace, empirical };

NoiseFamily noise_family_from_string(const std::string& s);
std::string to_string(NoiseFamily family);

/// Zero-mean exogenous noise. The empirical family bootstraps from a residual
/// pool that is recentered to mean zero on construction.
struct NoiseModel {
  NoiseFamily family = NoiseFamily::gaussian;
  double scale = 1.0;
  std::vector<double> residual_pool;

  static NoiseModel gaussian(double scale);
  static NoiseModel laplace(double scale);
  static NoiseModel empirical(std::vector<double> pool);

  double sample(Rng& rng) const;
};

// ---- file IO ----
// CSV: UTF-8, comma delimiter, '.' decimal point, leading '#' comment lines
// allowed, first non-comment line is the header, empty cell = missing entry.
// Graph JSON: keys format_version, max_lag, var_names, edges (target/source/lag).

TimeSeriesDataset load_csv(const std::string& path);
void save_csv(const TimeSeriesDataset& dataset, const std::string& path);

struct LoadedGraph {
  LagGraph graph;
  std::vector<std::string> var_names;
};

LoadedGraph load_graph(const std::string& path);
void save_graph(const LagGraph& graph, const std::vector<std::string>& var_names,
                const std::string& path);

struct LoadedWeights {
  LagWeightTensor weights;
  std::vector<std::string> var_names;
};

LoadedWeights load_weights(const std::string& path);
void save_weights(const LagWeightTensor& weights, const std::vector<std::string>& var_names,
                  const std::string& path);

}  // namespace tscausal
