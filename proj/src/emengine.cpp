#include "tscausal/emengine.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tscausal/stats.hpp"

namespace tscausal {

namespace {

using nlohmann::json;

constexpr std::uint64_t kMapStream = 0x6d6170;      // feature map construction
constexpr std::uint64_t kPruneStream = 0x7072756e;  // univariate prune maps

const std::vector<double> kLambdaGrid = {0.01, 0.05, 0.1, 0.2};

constexpr double kPruneRssFraction = 1e-3;
constexpr double kPruneSignificance = 0.001;
constexpr double kRidgePenalty = 1e-6;
constexpr int kUnivariateFeatures = 10;

}  // namespace

EmMode em_mode_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "linear") return EmMode::linear;
  if (l == "kernel") return EmMode::kernel;
  throw ValidationError("unknown mode: " + s + " (expected linear or kernel)");
}

std::string to_string(EmMode mode) { return mode == EmMode::linear ? "linear" : "kernel"; }

void EmConfig::validate() const {
  if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (!(tol > 0.0)) throw ValidationError("tol must be > 0");
  if (!(alpha >= 0.0) || !(alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (!(gamma > 0.0)) throw ValidationError("gamma must be > 0");
  if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
  if (max_lag < 1) throw ValidationError("max_lag must be >= 1");
  if (num_features < 1) throw ValidationError("num_features must be >= 1");
  if (bandwidth < 0.0) throw ValidationError("bandwidth must be >= 0 (0 = median heuristic)");
}

EmConfig parse_em_config_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid EM config JSON: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "max_iters", "tol",          "alpha",       "gamma",      "mode",
      "noise_injection", "prune",  "lambda",      "lambda_grid", "max_lag",
      "num_features", "bandwidth", "identity_map", "seed"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError("unknown EM config key: " + key);
  }
  EmConfig c;
  if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
  if (j.contains("tol")) c.tol = j.at("tol").get<double>();
  if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
  if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
  if (j.contains("mode")) c.mode = em_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("noise_injection")) c.noise_injection = j.at("noise_injection").get<bool>();
  if (j.contains("prune")) c.prune = j.at("prune").get<bool>();
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  if (j.contains("lambda_grid")) c.lambda_grid = j.at("lambda_grid").get<bool>();
  if (j.contains("max_lag")) c.max_lag = j.at("max_lag").get<int>();
  if (j.contains("num_features")) c.num_features = j.at("num_features").get<int>();
  if (j.contains("bandwidth")) c.bandwidth = j.at("bandwidth").get<double>();
  if (j.contains("identity_map")) c.identity_map = j.at("identity_map").get<bool>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

std::string to_json(const EmConfig& config) {
  json j = {{"max_iters", config.max_iters},
            {"tol", config.tol},
            {"alpha", config.alpha},
            {"gamma", config.gamma},
            {"mode", to_string(config.mode)},
            {"prune", config.prune},
            {"lambda", config.lambda},
            {"lambda_grid", config.lambda_grid},
            {"max_lag", config.max_lag},
            {"num_features", config.num_features},
            {"bandwidth", config.bandwidth},
            {"identity_map", config.identity_map},
            {"seed", config.seed}};
  if (config.noise_injection.has_value()) j["noise_injection"] = *config.noise_injection;
  return j.dump(2);
}

std::string diagnostics_json_lines(const std::vector<IterationDiagnostics>& history) {
  std::string out;
  for (const auto& h : history) {
    const json j = {{"iteration", h.iteration},
                    {"impute_delta", h.impute_delta},
                    {"weight_delta", h.weight_delta},
                    {"objective", h.objective},
                    {"nnz_edges", h.nnz_edges}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

EmState initialize(const TimeSeriesDataset& dataset, const EmConfig& config) {
  dataset.validate();
  config.validate();
  const Eigen::Index T = dataset.rows();
  const Eigen::Index d = dataset.cols();
  if (T <= config.max_lag) throw ValidationError("series shorter than lag order");

  EmState st;
  st.completed = dataset;
  auto& values = st.completed.values;
  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<Eigen::Index> obs;
    for (Eigen::Index t = 0; t < T; ++t)
      if (dataset.mask(t, i)) obs.push_back(t);
    if (obs.empty())
      throw ValidationError("variable '" + dataset.var_names[static_cast<size_t>(i)] +
                            "' has no observed entries");
    double mean = 0.0;
    for (const auto t : obs) mean += values(t, i);
    mean /= static_cast<double>(obs.size());

    for (Eigen::Index t = 0; t < obs.front(); ++t) values(t, i) = mean;
    for (size_t k = 0; k + 1 < obs.size(); ++k) {
      const Eigen::Index t0 = obs[k];
      const Eigen::Index t1 = obs[k + 1];
      const double v0 = values(t0, i);
      const double v1 = values(t1, i);
      for (Eigen::Index t = t0 + 1; t < t1; ++t)
        values(t, i) = v0 + (v1 - v0) * static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
    }
    for (Eigen::Index t = obs.back() + 1; t < T; ++t) values(t, i) = mean;
  }

  st.smoothed_weights = LagWeightTensor::zero(config.max_lag, static_cast<int>(d));
  st.raw_weights = LagWeightTensor::zero(config.max_lag, static_cast<int>(d));
  st.graph = LagGraph::empty(config.max_lag, static_cast<int>(d));

  if (config.mode == EmMode::linear || config.identity_map) {
    st.map = KernelFeatureMap::identity_map(static_cast<int>(d));
  } else {
    const double sigma =
        config.bandwidth > 0.0 ? config.bandwidth : median_bandwidth(st.completed);
    st.map = build_feature_map(static_cast<int>(d), config.num_features, sigma,
                               derive_seed(config.seed, kMapStream));
  }
  st.sens = sensitivity(st.map);
  st.lambda = config.lambda_grid
                  ? select_lambda_by_holdout(st.completed, config.max_lag, st.map, kLambdaGrid)
                  : config.lambda;
  return st;
}

EmState m_step(EmState state, const EmConfig& config) {
  const auto problem =
      build_kernel_problem(state.completed, config.max_lag, state.lambda, state.map);
  state.model = solve_lasso(problem);
  state.model_fitted = true;
  auto raw = project_weights(state.model, state.sens, config.max_lag,
                             static_cast<int>(state.completed.cols()));
  double delta = 0.0;
  for (int tau = 1; tau <= config.max_lag; ++tau)
    delta = std::max(delta,
                     (raw.lag(tau) - state.raw_weights.lag(tau)).cwiseAbs().maxCoeff());
  state.weight_delta = delta;
  state.raw_weights = std::move(raw);
  state.iteration += 1;
  return state;
}

EmState smooth_and_threshold(EmState state, const EmConfig& config) {
  if (state.iteration <= 1) {
    state.smoothed_weights = state.raw_weights;
  } else {
    for (int tau = 1; tau <= config.max_lag; ++tau)
      state.smoothed_weights.lag(tau) = config.alpha * state.smoothed_weights.lag(tau) +
                                        (1.0 - config.alpha) * state.raw_weights.lag(tau);
  }

  // Normalization feeds the threshold only; the stored weights stay on their
  // natural scale so the smoothing recursion remains exact.
  for (int tau = 1; tau <= config.max_lag; ++tau) {
    const auto& w = state.smoothed_weights.lag(tau);
    const double peak = w.cwiseAbs().maxCoeff();
    auto& adj = state.graph.lag(tau);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        adj(i, j) = peak > 0.0 && std::abs(w(i, j)) / peak > config.gamma;
  }
  state.graph.refresh_summary();
  return state;
}

EmState e_step(EmState state, const EmConfig& config) {
  if (!state.model_fitted) {
    if (state.iteration == 0) return state;  // initialization stands in
    throw std::logic_error("e_step: no fitted model past iteration 0");
  }
  const int L = config.max_lag;
  const Eigen::Index T = state.completed.rows();
  const Eigen::Index d = state.completed.cols();
  const auto& mask = state.completed.mask;
  const bool inject = config.injection_enabled();

  std::vector<NoiseModel> pools;
  if (inject) {
    pools.reserve(static_cast<size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) {
      std::vector<double> pool;
      for (Eigen::Index r = 0; r < state.model.residuals.rows(); ++r)
        if (mask(r + L, i)) pool.push_back(state.model.residuals(r, i));
      if (pool.empty())  // every target row imputed; bootstrap from all rows
        for (Eigen::Index r = 0; r < state.model.residuals.rows(); ++r)
          pool.push_back(state.model.residuals(r, i));
      pools.push_back(NoiseModel::empirical(std::move(pool)));
    }
  }

  double delta = 0.0;
  Vector features;
  for (Eigen::Index t = L; t < T; ++t) {
    bool any_missing = false;
    for (Eigen::Index i = 0; i < d && !any_missing; ++i) any_missing = !mask(t, i);
    if (!any_missing) continue;
    fill_feature_row(state.completed.values, t, L, state.map, features);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (mask(t, i)) continue;
      double imputed = state.model.coefficients.row(i).dot(features) + state.model.intercepts(i);
      if (inject) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(state.iteration),
                            static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)));
        imputed += pools[static_cast<size_t>(i)].sample(rng);
      }
      delta = std::max(delta, std::abs(imputed - state.completed.values(t, i)));
      state.completed.values(t, i) = imputed;
    }
  }
  state.impute_delta = delta;
  return state;
}

namespace {

struct ParentRef {
  int j = 0;
  int tau = 0;
};

// RSS of a centered least-squares (ridge for penalty > 0) fit of y on the
// selected columns. Column subset given by keep flags.
double subset_rss(const Matrix& design, const Vector& y, const std::vector<int>& col_of_block,
                  int block_width, int skip_block, double penalty) {
  const Eigen::Index n = design.rows();
  const int blocks = static_cast<int>(col_of_block.size());
  Eigen::Index width = 0;
  for (int b = 0; b < blocks; ++b)
    if (b != skip_block) width += block_width;
  if (width == 0) {
    const double mean = y.mean();
    return (y.array() - mean).square().sum();
  }

  Eigen::MatrixXd x(n, width);
  Eigen::Index at = 0;
  for (int b = 0; b < blocks; ++b) {
    if (b == skip_block) continue;
    x.middleCols(at, block_width) =
        design.middleCols(col_of_block[static_cast<size_t>(b)], block_width);
    at += block_width;
  }
  Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;
  Vector yc = y.array() - y.mean();

  Eigen::VectorXd beta;
  if (penalty > 0.0) {
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += penalty;
    beta = gram.ldlt().solve(x.transpose() * yc);
  } else {
    beta = x.colPivHouseholderQr().solve(yc);
  }
  return (yc - x * beta).squaredNorm();
}

// Decide whether each block survives the nested-model comparison.
std::vector<bool> test_blocks(const Matrix& design, const Vector& y, int block_width,
                              double penalty) {
  const auto n = static_cast<double>(design.rows());
  const int blocks = static_cast<int>(design.cols()) / block_width;
  std::vector<int> col_of_block(static_cast<size_t>(blocks));
  for (int b = 0; b < blocks; ++b) col_of_block[static_cast<size_t>(b)] = b * block_width;

  const double rss_full = subset_rss(design, y, col_of_block, block_width, -1, penalty);
  const double df2 = n - (blocks * block_width + 1);
  const double tiny = 1e-12 * n;

  std::vector<bool> keep(static_cast<size_t>(blocks), true);
  for (int b = 0; b < blocks; ++b) {
    const double rss_drop = subset_rss(design, y, col_of_block, block_width, b, penalty);
    const double gain = std::max(0.0, rss_drop - rss_full);
    double fraction;
    double p_value;
    if (rss_full <= tiny) {
      // numerically exact fit; the block matters only if dropping it costs
      const bool matters = gain > tiny;
      fraction = matters ? 1.0 : 0.0;
      p_value = matters ? 0.0 : 1.0;
    } else {
      fraction = gain / rss_full;
      const double f_stat = (gain / block_width) / (rss_full / df2);
      p_value = f_test_p_value(f_stat, block_width, df2);
    }
    if (fraction < kPruneRssFraction || p_value > kPruneSignificance)
      keep[static_cast<size_t>(b)] = false;
  }
  return keep;
}

}  // namespace

EmState prune(EmState state, const EmConfig& config) {
  const int L = config.max_lag;
  const Eigen::Index T = state.completed.rows();
  const Eigen::Index d = state.completed.cols();
  const Eigen::Index N = T - L;
  const bool kernel_path = config.mode == EmMode::kernel && !state.map.identity;

  if (kernel_path && !config.injection_enabled())
    std::cerr << "WARNING: pruning on deterministically imputed data in kernel mode; "
                 "residual independence is violated and the F-tests may be unreliable\n";

  // Univariate feature maps per source variable, shared across targets/lags.
  std::vector<KernelFeatureMap> univ_maps;
  if (kernel_path) {
    univ_maps.reserve(static_cast<size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
      TimeSeriesDataset col;
      col.values = state.completed.values.col(j);
      col.mask = BoolMatrix::Constant(T, 1, true);
      col.var_names = {state.completed.var_names[static_cast<size_t>(j)]};
      const double bw = median_bandwidth(col);
      univ_maps.push_back(build_feature_map(
          1, kUnivariateFeatures, bw,
          derive_seed(config.seed, kPruneStream, static_cast<std::uint64_t>(j))));
    }
  }
  const int block_width = kernel_path ? kUnivariateFeatures : 1;
  const double penalty = kernel_path ? kRidgePenalty : 0.0;

  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<ParentRef> parents;
    for (int tau = 1; tau <= L; ++tau)
      for (Eigen::Index j = 0; j < d; ++j)
        if (state.graph.lag(tau)(i, j)) parents.push_back({static_cast<int>(j), tau});
    if (parents.empty()) continue;

    const auto width = static_cast<Eigen::Index>(parents.size()) * block_width;
    if (width + 1 >= N) {
      std::cerr << "warning: skipping pruning for variable '"
                << state.completed.var_names[static_cast<size_t>(i)]
                << "': parent design (" << width << " columns) is not smaller than the "
                << N << " usable rows\n";
      continue;
    }

    Matrix design(N, width);
    for (size_t k = 0; k < parents.size(); ++k) {
      const auto& pr = parents[k];
      const auto lagged =
          state.completed.values.col(pr.j).segment(L - pr.tau, N);
      if (kernel_path) {
        const auto& map = univ_maps[static_cast<size_t>(pr.j)];
        Vector x(1), z;
        for (Eigen::Index r = 0; r < N; ++r) {
          x(0) = lagged(r);
          embed_into(map, x, z);
          design.block(r, static_cast<Eigen::Index>(k) * block_width, 1, block_width) =
              z.transpose();
        }
      } else {
        design.col(static_cast<Eigen::Index>(k)) = lagged;
      }
    }
    const Vector y = state.completed.values.col(i).segment(L, N);

    const auto keep = test_blocks(design, y, block_width, penalty);
    for (size_t k = 0; k < parents.size(); ++k)
      if (!keep[k]) state.graph.lag(parents[k].tau)(i, parents[k].j) = false;
  }
  state.graph.refresh_summary();
  return state;
}

EmResult run(const TimeSeriesDataset& dataset, const EmConfig& config) {
  EmState state = initialize(dataset, config);
  for (int k = 0; k < config.max_iters; ++k) {
    state = m_step(std::move(state), config);
    state = smooth_and_threshold(std::move(state), config);
    state = e_step(std::move(state), config);
    state.history.push_back(
        {state.iteration, state.impute_delta, state.weight_delta,
         state.model.objective_trace.empty() ? 0.0 : state.model.objective_trace.back(),
         state.graph.edge_count()});
    if (std::max(state.impute_delta, state.weight_delta) < config.tol) {
      state.converged = true;
      break;
    }
  }
  if (config.prune) state = prune(std::move(state), config);

  EmResult result;
  result.graph = state.graph;
  result.weights = state.smoothed_weights;
  result.state = std::move(state);
  return result;
}

}  // namespace tscausal
