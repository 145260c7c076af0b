#include "tscausal/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "json.hpp"

namespace tscausal {

namespace {

using nlohmann::json;

// Fixed tags so the graph, series and mask consume independent streams.
constexpr std::uint64_t kGraphStream = 0x67726170;
constexpr std::uint64_t kSimStream = 0x73696d;
constexpr std::uint64_t kMaskStream = 0x6d61736b;

int parse_int_token(const std::string& tok, const std::string& name) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty())
    throw ValidationError("config name: cannot parse '" + tok + "' as " + name);
  return static_cast<int>(v);
}

bool all_digits(const std::string& tok) {
  return !tok.empty() &&
         std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

FunctionType function_type_from_string(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  if (u == "LR") return FunctionType::LR;
  if (u == "SIN") return FunctionType::SIN;
  if (u == "TANH") return FunctionType::TANH;
  if (u == "SIGMOID") return FunctionType::SIGMOID;
  throw ValidationError("unknown function type: " + s);
}

std::string to_string(FunctionType f) {
  switch (f) {
    case FunctionType::LR: return "LR";
    case FunctionType::SIN: return "SIN";
    case FunctionType::TANH: return "TANH";
    case FunctionType::SIGMOID: return "SIGMOID";
  }
  return "LR";
}

double apply_function(FunctionType f, double x) {
  switch (f) {
    case FunctionType::LR: return x;
    case FunctionType::SIN: return std::sin(x);
    case FunctionType::TANH: return std::tanh(x);
    case FunctionType::SIGMOID: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

void SyntheticConfig::validate() const {
  if (num_vars < 1) throw ValidationError("num_vars must be >= 1");
  if (max_lag < 1) throw ValidationError("max_lag must be >= 1");
  if (num_edges < 0) throw ValidationError("num_edges must be >= 0");
  const long slots = static_cast<long>(max_lag) * num_vars * num_vars;
  if (num_edges > slots)
    throw ValidationError("num_edges " + std::to_string(num_edges) + " exceeds the " +
                          std::to_string(slots) + " available lagged slots");
  if (!std::isfinite(noise_scale) || noise_scale < 0.0)
    throw ValidationError("noise_scale must be >= 0");
  if (noise_family == NoiseFamily::empirical)
    throw ValidationError("synthetic noise family must be gaussian or laplace");
  if (series_length <= max_lag) throw ValidationError("series_length must exceed max_lag");
  if (!(missing_rate >= 0.0) || missing_rate >= 1.0)
    throw ValidationError("missing_rate must lie in [0, 1)");
  if (!(weight_range.first > 0.0) || !(weight_range.first < weight_range.second))
    throw ValidationError("weight_range must satisfy 0 < low < high");
}

std::string SyntheticConfig::name() const {
  return to_string(function_type) + "-" + to_string(noise_family) + "-" +
         std::to_string(num_vars) + "-" + std::to_string(num_edges) + "-" +
         std::to_string(max_lag);
}

SyntheticConfig parse_config_name(const std::string& name) {
  std::vector<std::string> toks;
  std::stringstream ss(name);
  std::string tok;
  while (std::getline(ss, tok, '-')) toks.push_back(tok);
  if (toks.size() != 5)
    throw ValidationError("config name '" + name + "' must have five dash-separated fields");

  SyntheticConfig c;
  if (all_digits(toks[0])) {  // d-e-FUNC-noise-L alias
    c.num_vars = parse_int_token(toks[0], "num_vars");
    c.num_edges = parse_int_token(toks[1], "num_edges");
    c.function_type = function_type_from_string(toks[2]);
    c.noise_family = noise_family_from_string(toks[3]);
    c.max_lag = parse_int_token(toks[4], "max_lag");
  } else {  // FUNC-noise-d-e-L
    c.function_type = function_type_from_string(toks[0]);
    c.noise_family = noise_family_from_string(toks[1]);
    c.num_vars = parse_int_token(toks[2], "num_vars");
    c.num_edges = parse_int_token(toks[3], "num_edges");
    c.max_lag = parse_int_token(toks[4], "max_lag");
  }
  return c;
}

namespace {

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  if (j.contains("name")) c = parse_config_name(j.at("name").get<std::string>());
  static const std::vector<std::string> known = {
      "name",        "num_vars",      "num_edges",    "max_lag",      "function_type",
      "noise_family", "noise_scale",  "series_length", "missing_rate", "seed",
      "weight_range"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError("unknown synthetic config key: " + key);
  }
  if (j.contains("num_vars")) c.num_vars = j.at("num_vars").get<int>();
  if (j.contains("num_edges")) c.num_edges = j.at("num_edges").get<int>();
  if (j.contains("max_lag")) c.max_lag = j.at("max_lag").get<int>();
  if (j.contains("function_type"))
    c.function_type = function_type_from_string(j.at("function_type").get<std::string>());
  if (j.contains("noise_family"))
    c.noise_family = noise_family_from_string(j.at("noise_family").get<std::string>());
  if (j.contains("noise_scale")) c.noise_scale = j.at("noise_scale").get<double>();
  if (j.contains("series_length")) c.series_length = j.at("series_length").get<int>();
  if (j.contains("missing_rate")) c.missing_rate = j.at("missing_rate").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("weight_range")) {
    const auto r = j.at("weight_range").get<std::vector<double>>();
    if (r.size() != 2) throw ValidationError("weight_range must be [low, high]");
    c.weight_range = {r[0], r[1]};
  }
  c.validate();
  return c;
}

}  // namespace

SyntheticConfig parse_synthetic_config_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid synthetic config JSON: ") + e.what());
  }
  return synthetic_config_from_json(j);
}

SyntheticConfig load_synthetic_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synthetic_config_json(ss.str());
}

std::string to_json(const SyntheticConfig& config) {
  const json j = {{"num_vars", config.num_vars},
                  {"num_edges", config.num_edges},
                  {"max_lag", config.max_lag},
                  {"function_type", to_string(config.function_type)},
                  {"noise_family", to_string(config.noise_family)},
                  {"noise_scale", config.noise_scale},
                  {"series_length", config.series_length},
                  {"missing_rate", config.missing_rate},
                  {"seed", config.seed},
                  {"weight_range", {config.weight_range.first, config.weight_range.second}}};
  return j.dump(2);
}

double companion_spectral_radius(const LagWeightTensor& weights) {
  const int L = weights.max_lag();
  const Eigen::Index d = weights.dim();
  if (L == 0 || d == 0) return 0.0;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(L * d, L * d);
  for (int tau = 1; tau <= L; ++tau) a.block(0, (tau - 1) * d, d, d) = weights.lag(tau);
  for (int tau = 1; tau < L; ++tau) a.block(tau * d, (tau - 1) * d, d, d).setIdentity();
  return a.eigenvalues().cwiseAbs().maxCoeff();
}

GeneratedSystem generate_lag_graph(const SyntheticConfig& config) {
  config.validate();
  const int d = config.num_vars;
  const int L = config.max_lag;
  GeneratedSystem out;
  out.graph = LagGraph::empty(L, d);
  out.weights = LagWeightTensor::zero(L, d);
  if (config.num_edges == 0) return out;

  Rng rng(derive_seed(config.seed, kGraphStream));
  const long slots = static_cast<long>(L) * d * d;
  std::vector<long> slot_ids(static_cast<size_t>(slots));
  std::iota(slot_ids.begin(), slot_ids.end(), 0L);

  // Partial Fisher-Yates: after e swaps the prefix is a uniform sample
  // of e distinct slots.
  for (int k = 0; k < config.num_edges; ++k) {
    const long pick = k + static_cast<long>(rng.below(static_cast<std::uint64_t>(slots - k)));
    std::swap(slot_ids[static_cast<size_t>(k)], slot_ids[static_cast<size_t>(pick)]);
    const long s = slot_ids[static_cast<size_t>(k)];
    const int tau = static_cast<int>(s / (static_cast<long>(d) * d)) + 1;
    const long rem = s % (static_cast<long>(d) * d);
    const int i = static_cast<int>(rem / d);
    const int j = static_cast<int>(rem % d);
    const double magnitude = rng.uniform(config.weight_range.first, config.weight_range.second);
    const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
    out.graph.lag(tau)(i, j) = true;
    out.weights.lag(tau)(i, j) = sign * magnitude;
  }
  out.graph.refresh_summary();

  // Scaling the weights does not scale the companion eigenvalues linearly
  // (the sub-diagonal identity blocks stay fixed), hence the repeat loop.
  double rho = companion_spectral_radius(out.weights);
  for (int it = 0; it < 100 && rho > 0.9; ++it) {
    for (auto& w : out.weights.lags) w *= 0.9 / rho;
    rho = companion_spectral_radius(out.weights);
  }
  return out;
}

TimeSeriesDataset simulate_series(const LagGraph& graph, const LagWeightTensor& weights,
                                  const SyntheticConfig& config) {
  config.validate();
  const int d = config.num_vars;
  const int L = config.max_lag;
  if (graph.dim() != d || graph.max_lag() != L || weights.dim() != d || weights.max_lag() != L)
    throw ValidationError("simulate_series: graph/weights shape does not match config");

  const int burn = 10 * L;
  const int total = burn + config.series_length;
  Matrix x = Matrix::Zero(total, d);
  Rng rng(derive_seed(config.seed, kSimStream));
  const bool noisy = config.noise_scale > 0.0;
  auto draw = [&]() -> double {
    if (!noisy) return 0.0;
    return config.noise_family == NoiseFamily::laplace ? rng.laplace(config.noise_scale)
                                                       : rng.normal(0.0, config.noise_scale);
  };

  for (int t = 0; t < L; ++t)
    for (int i = 0; i < d; ++i) x(t, i) = draw();

  Vector fx(d);
  for (int t = L; t < total; ++t) {
    Vector acc = Vector::Zero(d);
    for (int tau = 1; tau <= L; ++tau) {
      for (int j = 0; j < d; ++j) fx(j) = apply_function(config.function_type, x(t - tau, j));
      acc.noalias() += weights.lag(tau) * fx;
    }
    for (int i = 0; i < d; ++i) {
      x(t, i) = acc(i) + draw();
      if (std::abs(x(t, i)) > 1e8)
        throw ValidationError(
            "simulated trajectory diverged (|value| > 1e8); re-scale the weight tensor");
    }
  }

  TimeSeriesDataset ds;
  ds.values = x.bottomRows(config.series_length);
  ds.mask = BoolMatrix::Constant(config.series_length, d, true);
  ds.var_names = default_var_names(d);
  return ds;
}

TimeSeriesDataset apply_mcar_mask(const TimeSeriesDataset& dataset, double missing_rate,
                                  std::uint64_t seed) {
  dataset.validate();
  if (!(missing_rate >= 0.0) || missing_rate >= 1.0)
    throw ValidationError("missing_rate must lie in [0, 1)");
  TimeSeriesDataset out = dataset;
  if (missing_rate == 0.0) return out;

  Rng rng(derive_seed(seed, kMaskStream));
  const Eigen::Index T = dataset.rows();
  const Eigen::Index d = dataset.cols();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    BoolMatrix mask = dataset.mask;
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index i = 0; i < d; ++i)
        if (mask(t, i) && rng.uniform() < missing_rate) mask(t, i) = false;
    bool every_column_observed = true;
    for (Eigen::Index i = 0; i < d && every_column_observed; ++i) {
      bool any = false;
      for (Eigen::Index t = 0; t < T && !any; ++t) any = mask(t, i);
      every_column_observed = any;
    }
    if (every_column_observed) {
      out.mask = std::move(mask);
      return out;
    }
  }
  throw ValidationError("variable fully unobserved after 1000 mask resamples; lower missing_rate");
}

SyntheticDataset generate(const SyntheticConfig& config) {
  config.validate();
  SyntheticDataset out;
  auto system = generate_lag_graph(config);
  out.graph = std::move(system.graph);
  out.weights = std::move(system.weights);
  auto series = simulate_series(out.graph, out.weights, config);
  out.dataset = apply_mcar_mask(series, config.missing_rate, config.seed);
  return out;
}

}  // namespace tscausal
