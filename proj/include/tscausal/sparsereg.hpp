#pragma once

#include <string>
#include <vector>

#include "tscausal/dataset.hpp"
#include "tscausal/kernelmap.hpp"

namespace tscausal {

/// Lasso problem over lagged features. The design is stored raw; the solver
/// standardizes columns internally (zero mean, unit population variance) and
/// returns coefficients on the raw scale. Objective per target:
/// (1/2N) |y - X b|^2 + lambda |b|_1, intercept unpenalized via centering.
struct RegressionProblem {
  Matrix design;   // N x M, M = max_lag * block_width
  Matrix targets;  // N x d
  double lambda = 0.0;
  int max_lag = 1;
  int block_width = 0;  // columns per lag block: d (linear) or p (kernel)
};

struct FittedModel {
  Matrix coefficients;  // d x M, raw design scale; row i belongs to target i
  Vector intercepts;    // d
  Matrix residuals;     // N x d, targets - predictions exactly
  std::vector<double> objective_trace;  // per-sweep, summed over targets
  bool converged = true;
  int sweeps = 0;
};

/// Stacked per-lag features of series row t: segment tau-1 holds the embedded
/// row t-tau. Both the problem builders and the imputation path evaluate
/// features through this one function, so fitted-on and predicted-from
/// feature values are bit-identical.
void fill_feature_row(const Matrix& values, Eigen::Index t, int max_lag,
                      const KernelFeatureMap& map, Vector& out);

RegressionProblem build_linear_problem(const TimeSeriesDataset& dataset, int max_lag,
                                       double lambda);

RegressionProblem build_kernel_problem(const TimeSeriesDataset& dataset, int max_lag,
                                       double lambda, const KernelFeatureMap& map);

/// Cyclic coordinate descent with soft-thresholding, one pass per target
/// column over the shared Gram matrix. Stops when the largest standardized
/// coefficient change falls below 1e-6 or after 1e4 sweeps (warning, best
/// iterate returned).
FittedModel solve_lasso(const RegressionProblem& problem);

Matrix predict(const FittedModel& model, const Matrix& design);

/// Input-space causal strengths. Kernel mode: W^(tau)[i][j] =
/// sum_k |coef[i][(tau-1)p+k]| * phi[k][j] (nonnegative). Identity mode:
/// plain reshape of the signed coefficients into L x d x d.
LagWeightTensor project_weights(const FittedModel& model, const SensitivityMatrix& sens,
                                int max_lag, int dim);

/// Fits each lambda on the first 80% of usable rows and scores squared
/// prediction error on the remaining 20%; returns the grid value with the
/// smallest holdout error (first on ties, in grid order).
double select_lambda_by_holdout(const TimeSeriesDataset& dataset, int max_lag,
                                const KernelFeatureMap& map, const std::vector<double>& grid);

/// Diagnostics dump: coefficients, intercepts, convergence data and per-target
/// residual RMS (raw residuals omitted for size).
void save_fitted_model(const FittedModel& model, const std::string& path);

}  // namespace tscausal
