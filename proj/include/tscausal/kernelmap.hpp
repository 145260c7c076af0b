#pragma once

#include <cstdint>
#include <string>

#include "tscausal/dataset.hpp"

namespace tscausal {

/// Random cosine features z_k(x) = sqrt(2/p) cos(<freq_k, x> + offset_k)
/// whose inner products approximate the RBF kernel exp(-|x-x'|^2 / (2 s^2)).
/// The identity flag marks the degenerate map phi(x) = x used to collapse the
/// kernelized pipeline onto plain linear lag regression.
struct KernelFeatureMap {
  Matrix frequencies;  // p x D, i.i.d. N(0, 1/s^2)
  Vector offsets;      // p, uniform on [0, 2pi)
  double bandwidth = 1.0;
  int num_features = 0;  // p; equals D for the identity map
  int input_dim = 0;
  bool identity = false;
  std::uint64_t seed = 0;

  static KernelFeatureMap identity_map(int input_dim);
};

KernelFeatureMap build_feature_map(int input_dim, int num_features, double bandwidth,
                                   std::uint64_t seed);

Vector embed(const KernelFeatureMap& map, const Vector& x);

/// Same as embed but writes into a caller-owned buffer sized num_features.
void embed_into(const KernelFeatureMap& map, const Vector& x, Vector& out);

/// Median pairwise Euclidean distance over up to 1000 evenly spaced rows of
/// a completed dataset (mask ignored; callers pass imputed data). Falls back
/// to 1.0 with a warning when the rows are effectively identical.
double median_bandwidth(const TimeSeriesDataset& dataset);

/// Per-feature input attribution: phi[k][j] = |frequencies[k][j]| * bandwidth,
/// rows normalized to sum to 1 (all-zero rows become uniform 1/D). For the
/// identity map phi is the D x D identity.
struct SensitivityMatrix {
  Matrix phi;
  bool identity = false;
};

SensitivityMatrix sensitivity(const KernelFeatureMap& map);

void save_feature_map(const KernelFeatureMap& map, const std::string& path);
KernelFeatureMap load_feature_map(const std::string& path);

}  // namespace tscausal
