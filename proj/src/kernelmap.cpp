#include "tscausal/kernelmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <vector>

#include "json.hpp"

namespace tscausal {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

void check_embed_args(const KernelFeatureMap& map, const Vector& x) {
  if (x.size() != map.input_dim)
    throw ValidationError("embed: input has dimension " + std::to_string(x.size()) +
                          ", map expects " + std::to_string(map.input_dim));
  if (!x.allFinite()) throw ValidationError("embed: non-finite input");
}

}  // namespace

KernelFeatureMap KernelFeatureMap::identity_map(int input_dim) {
  if (input_dim < 1) throw ValidationError("identity map needs input_dim >= 1");
  KernelFeatureMap m;
  m.identity = true;
  m.input_dim = input_dim;
  m.num_features = input_dim;
  m.bandwidth = 1.0;
  return m;
}

KernelFeatureMap build_feature_map(int input_dim, int num_features, double bandwidth,
                                   std::uint64_t seed) {
  if (input_dim < 1) throw ValidationError("build_feature_map: input_dim must be >= 1");
  if (num_features < 1) throw ValidationError("build_feature_map: num_features must be >= 1");
  if (!(bandwidth > 0.0)) throw ValidationError("build_feature_map: bandwidth must be > 0");

  KernelFeatureMap m;
  m.input_dim = input_dim;
  m.num_features = num_features;
  m.bandwidth = bandwidth;
  m.seed = seed;
  m.frequencies.resize(num_features, input_dim);
  m.offsets.resize(num_features);

  Rng rng(seed);
  const double freq_sd = 1.0 / bandwidth;
  for (int k = 0; k < num_features; ++k)
    for (int j = 0; j < input_dim; ++j) m.frequencies(k, j) = rng.normal(0.0, freq_sd);
  for (int k = 0; k < num_features; ++k) m.offsets(k) = rng.uniform(0.0, kTwoPi);
  return m;
}

void embed_into(const KernelFeatureMap& map, const Vector& x, Vector& out) {
  check_embed_args(map, x);
  if (map.identity) {
    out = x;
    return;
  }
  out.resize(map.num_features);
  out.noalias() = map.frequencies * x;
  out += map.offsets;
  const double scale = std::sqrt(2.0 / map.num_features);
  out = scale * out.array().cos();
}

Vector embed(const KernelFeatureMap& map, const Vector& x) {
  Vector out;
  embed_into(map, x, out);
  return out;
}

double median_bandwidth(const TimeSeriesDataset& dataset) {
  const Eigen::Index T = dataset.rows();
  const Eigen::Index d = dataset.cols();
  if (T < 2 || d < 1) throw ValidationError("median_bandwidth needs at least 2 rows");

  const Eigen::Index m = std::min<Eigen::Index>(T, 1000);
  std::vector<Eigen::Index> idx(static_cast<size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) idx[static_cast<size_t>(k)] = k * T / m;

  std::vector<double> sq;
  sq.reserve(static_cast<size_t>(m * (m - 1) / 2));
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a + 1; b < m; ++b)
      sq.push_back((dataset.values.row(idx[static_cast<size_t>(a)]) -
                    dataset.values.row(idx[static_cast<size_t>(b)]))
                       .squaredNorm());

  const auto mid = sq.begin() + (static_cast<long>(sq.size()) - 1) / 2;
  std::nth_element(sq.begin(), mid, sq.end());
  if (*mid <= 1e-12) {
    std::cerr << "warning: median pairwise distance is ~0 (near-constant data); "
                 "falling back to bandwidth 1.0\n";
    return 1.0;
  }
  return std::sqrt(*mid);
}

SensitivityMatrix sensitivity(const KernelFeatureMap& map) {
  SensitivityMatrix s;
  if (map.identity) {
    s.identity = true;
    s.phi = Matrix::Identity(map.input_dim, map.input_dim);
    return s;
  }
  const int p = map.num_features;
  const int D = map.input_dim;
  s.phi = (map.frequencies * map.bandwidth).cwiseAbs();
  for (int k = 0; k < p; ++k) {
    const double total = s.phi.row(k).sum();
    if (total > 0.0)
      s.phi.row(k) /= total;
    else
      s.phi.row(k).setConstant(1.0 / D);
  }
  return s;
}

void save_feature_map(const KernelFeatureMap& map, const std::string& path) {
  nlohmann::json freq = nlohmann::json::array();
  for (int k = 0; k < map.frequencies.rows(); ++k) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < map.frequencies.cols(); ++j) row.push_back(map.frequencies(k, j));
    freq.push_back(std::move(row));
  }
  nlohmann::json offsets = nlohmann::json::array();
  for (int k = 0; k < map.offsets.size(); ++k) offsets.push_back(map.offsets(k));
  const nlohmann::json j = {{"format_version", 1},
                            {"identity", map.identity},
                            {"input_dim", map.input_dim},
                            {"num_features", map.num_features},
                            {"bandwidth", map.bandwidth},
                            {"seed", map.seed},
                            {"frequencies", freq},
                            {"offsets", offsets}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

KernelFeatureMap load_feature_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("invalid JSON in " + path + ": " + e.what());
  }
  KernelFeatureMap m;
  m.identity = j.at("identity").get<bool>();
  m.input_dim = j.at("input_dim").get<int>();
  m.num_features = j.at("num_features").get<int>();
  m.bandwidth = j.at("bandwidth").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  if (m.identity) return KernelFeatureMap::identity_map(m.input_dim);

  const auto& freq = j.at("frequencies");
  const auto& offsets = j.at("offsets");
  if (static_cast<int>(freq.size()) != m.num_features ||
      static_cast<int>(offsets.size()) != m.num_features)
    throw ValidationError(path + ": frequency/offset count does not match num_features");
  m.frequencies.resize(m.num_features, m.input_dim);
  m.offsets.resize(m.num_features);
  for (int k = 0; k < m.num_features; ++k) {
    const auto& row = freq.at(static_cast<size_t>(k));
    if (static_cast<int>(row.size()) != m.input_dim)
      throw ValidationError(path + ": frequency row has wrong width");
    for (int jj = 0; jj < m.input_dim; ++jj)
      m.frequencies(k, jj) = row.at(static_cast<size_t>(jj)).get<double>();
    m.offsets(k) = offsets.at(static_cast<size_t>(k)).get<double>();
  }
  return m;
}

}  // namespace tscausal
