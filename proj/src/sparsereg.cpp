#include "tscausal/sparsereg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "json.hpp"

namespace tscausal {

namespace {

constexpr double kCoefTol = 1e-6;
constexpr int kMaxSweeps = 10000;

double soft_threshold(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

void check_problem(const RegressionProblem& p) {
  if (p.design.rows() < 1) throw ValidationError("regression problem has no rows");
  if (p.design.rows() != p.targets.rows())
    throw ValidationError("design and target row counts differ");
  if (p.lambda < 0.0) throw ValidationError("lambda must be >= 0");
  if (!p.design.allFinite()) throw ValidationError("non-finite design entry");
  if (!p.targets.allFinite()) throw ValidationError("non-finite target entry");
  if (p.max_lag < 1 || p.block_width < 1 ||
      p.design.cols() != static_cast<Eigen::Index>(p.max_lag) * p.block_width)
    throw ValidationError("design width does not equal max_lag * block_width");
}

}  // namespace

void fill_feature_row(const Matrix& values, Eigen::Index t, int max_lag,
                      const KernelFeatureMap& map, Vector& out) {
  const int block = map.num_features;
  out.resize(static_cast<Eigen::Index>(max_lag) * block);
  Vector x(values.cols());
  Vector z;
  for (int tau = 1; tau <= max_lag; ++tau) {
    x = values.row(t - tau);
    embed_into(map, x, z);
    out.segment(static_cast<Eigen::Index>(tau - 1) * block, block) = z;
  }
}

static RegressionProblem build_problem(const TimeSeriesDataset& dataset, int max_lag,
                                       double lambda, const KernelFeatureMap& map) {
  dataset.validate();
  if (max_lag < 1) throw ValidationError("max_lag must be >= 1");
  const Eigen::Index T = dataset.rows();
  const Eigen::Index d = dataset.cols();
  if (T <= max_lag) throw ValidationError("series shorter than lag order");
  if (map.input_dim != d)
    throw ValidationError("feature map input dimension does not match dataset");
  if (!dataset.values.allFinite())
    throw ValidationError("dataset has non-finite values; complete it first");

  RegressionProblem p;
  p.lambda = lambda;
  p.max_lag = max_lag;
  p.block_width = map.num_features;
  const Eigen::Index N = T - max_lag;
  p.design.resize(N, static_cast<Eigen::Index>(max_lag) * map.num_features);
  p.targets.resize(N, d);
  Vector row;
  for (Eigen::Index t = max_lag; t < T; ++t) {
    fill_feature_row(dataset.values, t, max_lag, map, row);
    p.design.row(t - max_lag) = row;
    p.targets.row(t - max_lag) = dataset.values.row(t);
  }
  return p;
}

RegressionProblem build_linear_problem(const TimeSeriesDataset& dataset, int max_lag,
                                       double lambda) {
  return build_problem(dataset, max_lag, lambda,
                       KernelFeatureMap::identity_map(static_cast<int>(dataset.cols())));
}

RegressionProblem build_kernel_problem(const TimeSeriesDataset& dataset, int max_lag,
                                       double lambda, const KernelFeatureMap& map) {
  return build_problem(dataset, max_lag, lambda, map);
}

FittedModel solve_lasso(const RegressionProblem& problem) {
  check_problem(problem);
  const Eigen::Index N = problem.design.rows();
  const Eigen::Index M = problem.design.cols();
  const Eigen::Index d = problem.targets.cols();
  const double lambda = problem.lambda;

  // Standardize columns; constant columns become all-zero and keep a zero
  // coefficient throughout.
  Matrix z = problem.design;
  Vector mu(M), sd(M);
  for (Eigen::Index j = 0; j < M; ++j) {
    mu(j) = z.col(j).mean();
    z.col(j).array() -= mu(j);
    const double var = z.col(j).squaredNorm() / static_cast<double>(N);
    sd(j) = std::sqrt(var);
    if (sd(j) > 1e-12)
      z.col(j) /= sd(j);
    else {
      z.col(j).setZero();
      sd(j) = 0.0;
    }
  }
  const Matrix gram = (z.transpose() * z) / static_cast<double>(N);

  FittedModel model;
  model.coefficients = Matrix::Zero(d, M);
  model.intercepts = Vector::Zero(d);
  std::vector<std::vector<double>> traces(static_cast<size_t>(d));
  bool all_converged = true;
  int max_sweeps_used = 0;

  Vector beta(M), q(M), c(M), yc(N);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double target_mean = problem.targets.col(i).mean();
    yc = problem.targets.col(i).array() - target_mean;
    c.noalias() = z.transpose() * yc / static_cast<double>(N);
    const double y_ss = yc.squaredNorm() / (2.0 * static_cast<double>(N));
    beta.setZero();
    q.setZero();

    auto& trace = traces[static_cast<size_t>(i)];
    bool converged = false;
    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
      double max_delta = 0.0;
      for (Eigen::Index j = 0; j < M; ++j) {
        const double gjj = gram(j, j);
        if (gjj <= 0.0) continue;
        const double rho = c(j) - q(j) + gjj * beta(j);
        const double updated = soft_threshold(rho, lambda) / gjj;
        const double delta = updated - beta(j);
        if (delta != 0.0) {
          q += gram.row(j).transpose() * delta;  // gram is symmetric
          beta(j) = updated;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      trace.push_back(y_ss - c.dot(beta) + 0.5 * beta.dot(q) +
                      lambda * beta.lpNorm<1>());
      if (max_delta < kCoefTol) {
        converged = true;
        ++sweep;
        break;
      }
    }
    if (!converged) {
      all_converged = false;
      std::cerr << "warning: lasso did not converge for target " << i << " after "
                << kMaxSweeps << " sweeps; returning best iterate\n";
    }
    max_sweeps_used = std::max(max_sweeps_used, sweep);

    double intercept = target_mean;
    for (Eigen::Index j = 0; j < M; ++j) {
      if (sd(j) > 0.0 && beta(j) != 0.0) {
        const double raw = beta(j) / sd(j);
        model.coefficients(i, j) = raw;
        intercept -= raw * mu(j);
      }
    }
    model.intercepts(i) = intercept;
  }

  // Per-target traces can have different lengths; extend each at its final
  // value (the target has converged) and sum so the combined trace keeps the
  // per-target monotone property.
  size_t longest = 0;
  for (const auto& t : traces) longest = std::max(longest, t.size());
  model.objective_trace.assign(longest, 0.0);
  for (const auto& t : traces)
    for (size_t s = 0; s < longest; ++s)
      model.objective_trace[s] += s < t.size() ? t[s] : t.back();

  model.converged = all_converged;
  model.sweeps = max_sweeps_used;
  model.residuals = problem.targets - predict(model, problem.design);
  return model;
}

Matrix predict(const FittedModel& model, const Matrix& design) {
  if (design.cols() != model.coefficients.cols())
    throw ValidationError("predict: design width does not match model");
  Matrix out = design * model.coefficients.transpose();
  out.rowwise() += model.intercepts.transpose();
  return out;
}

LagWeightTensor project_weights(const FittedModel& model, const SensitivityMatrix& sens,
                                int max_lag, int dim) {
  const Eigen::Index block = sens.phi.rows();
  if (model.coefficients.cols() != static_cast<Eigen::Index>(max_lag) * block)
    throw ValidationError("project_weights: coefficient width does not match lag blocks");
  if (model.coefficients.rows() != dim || sens.phi.cols() != dim)
    throw ValidationError("project_weights: dimension mismatch");

  LagWeightTensor w = LagWeightTensor::zero(max_lag, dim);
  for (int tau = 1; tau <= max_lag; ++tau) {
    const auto block_coef =
        model.coefficients.middleCols(static_cast<Eigen::Index>(tau - 1) * block, block);
    if (sens.identity)
      w.lag(tau) = block_coef;  // signed d x d reshape
    else
      w.lag(tau) = block_coef.cwiseAbs() * sens.phi;
  }
  return w;
}

double select_lambda_by_holdout(const TimeSeriesDataset& dataset, int max_lag,
                                const KernelFeatureMap& map, const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("lambda grid is empty");
  const auto full = build_problem(dataset, max_lag, 0.0, map);
  const Eigen::Index N = full.design.rows();
  const Eigen::Index train_n = (N * 8) / 10;
  const Eigen::Index hold_n = N - train_n;
  if (train_n < 1 || hold_n < 1)
    throw ValidationError("series too short for an 80/20 lambda holdout split");

  RegressionProblem train;
  train.design = full.design.topRows(train_n);
  train.targets = full.targets.topRows(train_n);
  train.max_lag = full.max_lag;
  train.block_width = full.block_width;

  double best_lambda = grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (const double lambda : grid) {
    train.lambda = lambda;
    const auto model = solve_lasso(train);
    const Matrix pred = predict(model, full.design.bottomRows(hold_n));
    const double err = (full.targets.bottomRows(hold_n) - pred).squaredNorm();
    if (err < best_err) {
      best_err = err;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

void save_fitted_model(const FittedModel& model, const std::string& path) {
  nlohmann::json coef = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.coefficients.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < model.coefficients.cols(); ++j)
      row.push_back(model.coefficients(i, j));
    coef.push_back(std::move(row));
  }
  nlohmann::json intercepts = nlohmann::json::array();
  nlohmann::json residual_rms = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.intercepts.size(); ++i) {
    intercepts.push_back(model.intercepts(i));
    residual_rms.push_back(std::sqrt(model.residuals.col(i).squaredNorm() /
                                     static_cast<double>(model.residuals.rows())));
  }
  const nlohmann::json j = {{"format_version", 1},
                            {"coefficients", coef},
                            {"intercepts", intercepts},
                            {"residual_rms", residual_rms},
                            {"objective_trace", model.objective_trace},
                            {"converged", model.converged},
                            {"sweeps", model.sweeps}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tscausal
