#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "tscausal/kernelmap.hpp"
#include "tscausal/rng.hpp"

using namespace tscausal;

namespace {

double rbf(const Vector& a, const Vector& b, double sigma) {
  return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

double kernel_mae(int p, int num_pairs, int dim, double sigma, std::uint64_t map_seed) {
  const auto map = build_feature_map(dim, p, sigma, map_seed);
  Rng rng(4242);  // pair sampling fixed across p so MAEs are comparable
  double mae = 0.0;
  for (int k = 0; k < num_pairs; ++k) {
    Vector a(dim), b(dim);
    for (int j = 0; j < dim; ++j) {
      a(j) = rng.normal(0.0, 1.5);
      b(j) = rng.normal(0.0, 1.5);
    }
    mae += std::abs(embed(map, a).dot(embed(map, b)) - rbf(a, b, sigma));
  }
  return mae / num_pairs;
}

}  // namespace

TEST_CASE("construction shapes, bounds and determinism") {
  const auto tiny = build_feature_map(1, 1, 2.0, 5);
  CHECK(tiny.frequencies.rows() == 1);
  CHECK(tiny.frequencies.cols() == 1);
  CHECK(tiny.offsets.size() == 1);
  CHECK(tiny.offsets(0) >= 0.0);
  CHECK(tiny.offsets(0) < 6.2831853072);

  const auto a = build_feature_map(4, 64, 1.3, 77);
  const auto b = build_feature_map(4, 64, 1.3, 77);
  REQUIRE(a.frequencies == b.frequencies);
  REQUIRE(a.offsets == b.offsets);
  const auto c = build_feature_map(4, 64, 1.3, 78);
  CHECK(a.frequencies != c.frequencies);

  // every feature value within +-sqrt(2/p)
  Rng rng(1);
  const double bound = std::sqrt(2.0 / 64) + 1e-15;
  for (int k = 0; k < 50; ++k) {
    Vector x(4);
    for (int j = 0; j < 4; ++j) x(j) = rng.normal(0.0, 5.0);
    const auto z = embed(a, x);
    REQUIRE(z.size() == 64);
    REQUIRE(z.cwiseAbs().maxCoeff() <= bound);
  }

  CHECK_THROWS_AS(build_feature_map(0, 10, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(build_feature_map(3, 0, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(build_feature_map(3, 10, 0.0, 1), ValidationError);
}

TEST_CASE("frequency distribution matches N(0, 1/sigma^2)") {
  const double sigma = 2.5;
  const auto map = build_feature_map(1, 10000, sigma, 99);
  const double mean = map.frequencies.mean();
  const double var = (map.frequencies.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::sqrt(var) == doctest::Approx(1.0 / sigma).epsilon(0.05));
}

TEST_CASE("embedding evaluates the cosine formula") {
  auto map = build_feature_map(3, 8, 1.0, 13);
  Vector x(3);
  x << 0.5, -1.0, 2.0;
  const auto z = embed(map, x);
  const double scale = std::sqrt(2.0 / 8);
  for (int k = 0; k < 8; ++k) {
    const double expected = scale * std::cos(map.frequencies.row(k).dot(x) + map.offsets(k));
    REQUIRE(z(k) == doctest::Approx(expected).epsilon(1e-14));
  }

  SUBCASE("zero offsets at the origin give the constant vector") {
    map.offsets.setZero();
    const auto z0 = embed(map, Vector::Zero(3));
    for (int k = 0; k < 8; ++k) REQUIRE(z0(k) == doctest::Approx(scale));
  }
  SUBCASE("dimension mismatch and non-finite input are rejected") {
    CHECK_THROWS_AS(embed(map, Vector::Zero(2)), ValidationError);
    Vector bad = Vector::Zero(3);
    bad(1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(embed(map, bad), ValidationError);
  }
  SUBCASE("embed_into matches embed") {
    Vector out;
    embed_into(map, x, out);
    REQUIRE(out == embed(map, x));
  }
}

TEST_CASE("inner products approximate the RBF kernel") {
  const double sigma = 1.5;
  const auto map = build_feature_map(5, 500, sigma, 2024);

  // self inner product ~ kappa(x, x) = 1; each draw carries O(1/sqrt(2p))
  // feature noise so the tight bound applies to the mean deviation
  Rng rng(3);
  double mean_dev = 0.0;
  for (int k = 0; k < 20; ++k) {
    Vector x(5);
    for (int j = 0; j < 5; ++j) x(j) = rng.normal(0.0, 2.0);
    const auto z = embed(map, x);
    const double dev = std::abs(z.dot(z) - 1.0);
    REQUIRE(dev < 0.15);
    mean_dev += dev / 20;
  }
  CHECK(mean_dev < 0.05);

  const double mae500 = kernel_mae(500, 1000, 5, sigma, 2024);
  CHECK(mae500 < 0.05);

  // error shrinks with p on the identical pair set
  const double mae200 = kernel_mae(200, 1000, 5, sigma, 2024);
  const double mae2000 = kernel_mae(2000, 1000, 5, sigma, 2024);
  CHECK(mae2000 < mae200);
}

TEST_CASE("embedding derivative matches the analytic cosine derivative") {
  const auto map = build_feature_map(4, 32, 1.0, 55);
  Rng rng(8);
  Vector x(4);
  for (int j = 0; j < 4; ++j) x(j) = rng.normal(0.0, 1.0);
  const double h = 1e-5;
  const double scale = std::sqrt(2.0 / 32);
  for (int j = 0; j < 4; ++j) {
    Vector hi = x, lo = x;
    hi(j) += h;
    lo(j) -= h;
    const Vector fd = (embed(map, hi) - embed(map, lo)) / (2.0 * h);
    Vector analytic(32);
    for (int k = 0; k < 32; ++k)
      analytic(k) = -scale * std::sin(map.frequencies.row(k).dot(x) + map.offsets(k)) *
                    map.frequencies(k, j);
    REQUIRE((fd - analytic).norm() / analytic.norm() < 1e-6);
  }
}

TEST_CASE("median bandwidth") {
  SUBCASE("two rows at distance 2") {
    TimeSeriesDataset ds;
    ds.values = Matrix::Zero(2, 1);
    ds.values(1, 0) = 2.0;
    ds.mask = BoolMatrix::Constant(2, 1, true);
    ds.var_names = default_var_names(1);
    CHECK(median_bandwidth(ds) == doctest::Approx(2.0));
  }
  SUBCASE("constant data falls back to 1") {
    TimeSeriesDataset ds;
    ds.values = Matrix::Constant(10, 3, 4.2);
    ds.mask = BoolMatrix::Constant(10, 3, true);
    ds.var_names = default_var_names(3);
    CHECK(median_bandwidth(ds) == 1.0);
  }
  SUBCASE("standard normal rows in dimension 10 give about sqrt(20)") {
    Rng rng(6);
    TimeSeriesDataset ds;
    ds.values = Matrix::Zero(1000, 10);
    for (int t = 0; t < 1000; ++t)
      for (int j = 0; j < 10; ++j) ds.values(t, j) = rng.normal();
    ds.mask = BoolMatrix::Constant(1000, 10, true);
    ds.var_names = default_var_names(10);
    CHECK(median_bandwidth(ds) == doctest::Approx(std::sqrt(20.0)).epsilon(0.10));
  }
  SUBCASE("needs two rows") {
    TimeSeriesDataset ds;
    ds.values = Matrix::Zero(1, 2);
    ds.mask = BoolMatrix::Constant(1, 2, true);
    ds.var_names = default_var_names(2);
    CHECK_THROWS_AS(median_bandwidth(ds), ValidationError);
  }
}

TEST_CASE("sensitivity matrix") {
  SUBCASE("single input dimension is all ones") {
    const auto map = build_feature_map(1, 16, 0.7, 3);
    const auto s = sensitivity(map);
    REQUIRE(s.phi.rows() == 16);
    REQUIRE(s.phi.cols() == 1);
    for (int k = 0; k < 16; ++k) REQUIRE(s.phi(k, 0) == 1.0);
  }
  SUBCASE("single nonzero frequency concentrates the row") {
    auto map = build_feature_map(3, 2, 2.0, 3);
    map.frequencies.row(0) << 3.0 / 2.0, 0.0, 0.0;
    map.frequencies.row(1).setZero();  // degenerate row -> uniform
    const auto s = sensitivity(map);
    CHECK(s.phi(0, 0) == doctest::Approx(1.0));
    CHECK(s.phi(0, 1) == 0.0);
    CHECK(s.phi(1, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(s.phi(1, 2) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("rows are nonnegative and sum to one on random maps") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto map = build_feature_map(6, 50, 0.5 + 0.3 * seed, seed);
      const auto s = sensitivity(map);
      for (int k = 0; k < 50; ++k) {
        REQUIRE(s.phi.row(k).minCoeff() >= 0.0);
        REQUIRE(s.phi.row(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("identity map gives the identity matrix") {
    const auto s = sensitivity(KernelFeatureMap::identity_map(4));
    CHECK(s.identity);
    REQUIRE(s.phi == Matrix::Identity(4, 4));
  }
}

TEST_CASE("identity map embeds as itself") {
  const auto map = KernelFeatureMap::identity_map(3);
  Vector x(3);
  x << -1.0, 0.5, 9.0;
  REQUIRE(embed(map, x) == x);
  CHECK(map.num_features == 3);
}

TEST_CASE("feature map json round trip") {
  const std::string path = "tscausal_test_map.json";
  const auto map = build_feature_map(4, 32, 1.7, 123);
  save_feature_map(map, path);
  const auto back = load_feature_map(path);
  REQUIRE(back.frequencies == map.frequencies);
  REQUIRE(back.offsets == map.offsets);
  CHECK(back.bandwidth == map.bandwidth);
  CHECK(back.seed == map.seed);
  CHECK_FALSE(back.identity);

  save_feature_map(KernelFeatureMap::identity_map(5), path);
  const auto ident = load_feature_map(path);
  CHECK(ident.identity);
  CHECK(ident.input_dim == 5);
  std::remove(path.c_str());
}
