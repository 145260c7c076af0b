#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "tscausal/emengine.hpp"
#include "tscausal/rng.hpp"
#include "tscausal/synthgen.hpp"

using namespace tscausal;

namespace {

TimeSeriesDataset make_dataset(const Matrix& values) {
  TimeSeriesDataset ds;
  ds.values = values;
  ds.mask = BoolMatrix::Constant(values.rows(), values.cols(), true);
  ds.var_names = default_var_names(static_cast<int>(values.cols()));
  return ds;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_bool(const BoolMatrix& a, const BoolMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_graph(const LagGraph& a, const LagGraph& b) {
  if (a.max_lag() != b.max_lag()) return false;
  for (int tau = 1; tau <= a.max_lag(); ++tau)
    if (!same_bool(a.lag(tau), b.lag(tau))) return false;
  return true;
}

bool same_weights(const LagWeightTensor& a, const LagWeightTensor& b) {
  if (a.max_lag() != b.max_lag()) return false;
  for (int tau = 1; tau <= a.max_lag(); ++tau)
    if (!same_matrix(a.lag(tau), b.lag(tau))) return false;
  return true;
}

struct CerrCapture {
  std::stringstream buffer;
  std::streambuf* old;
  CerrCapture() : old(std::cerr.rdbuf(buffer.rdbuf())) {}
  ~CerrCapture() { std::cerr.rdbuf(old); }
  std::string text() const { return buffer.str(); }
};

// X2^t = 0.8 X1^{t-1} + sigma eps, X3^t = 0.8 X2^{t-1} + sigma eps. The lag-2
// path from X1 to X3 is fully mediated by X2.
TimeSeriesDataset chain_dataset(int T, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x = Matrix::Zero(T, 3);
  for (Eigen::Index j = 0; j < 3; ++j) x(0, j) = sigma * rng.normal();
  for (int t = 1; t < T; ++t) {
    x(t, 0) = sigma * rng.normal();
    x(t, 1) = 0.8 * x(t - 1, 0) + sigma * rng.normal();
    x(t, 2) = 0.8 * x(t - 1, 1) + sigma * rng.normal();
  }
  return make_dataset(x);
}

}  // namespace

TEST_CASE("config validation") {
  EmConfig c;
  CHECK_NOTHROW(c.validate());

  SUBCASE("max_iters") { c.max_iters = 0; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("tol") { c.tol = 0.0; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("alpha low") { c.alpha = -0.1; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("alpha high") { c.alpha = 1.1; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("gamma") { c.gamma = 0.0; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("lambda") { c.lambda = -1.0; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("max_lag") { c.max_lag = 0; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("num_features") { c.num_features = 0; CHECK_THROWS_AS(c.validate(), ValidationError); }
  SUBCASE("bandwidth") { c.bandwidth = -0.5; CHECK_THROWS_AS(c.validate(), ValidationError); }
}

TEST_CASE("noise injection defaults depend on mode and map") {
  EmConfig c;
  CHECK_FALSE(c.injection_enabled());  // linear
  c.mode = EmMode::kernel;
  CHECK(c.injection_enabled());
  c.identity_map = true;
  CHECK_FALSE(c.injection_enabled());  // degenerate map behaves like linear
  c.noise_injection = true;
  CHECK(c.injection_enabled());
  c.identity_map = false;
  c.mode = EmMode::linear;
  CHECK(c.injection_enabled());  // explicit override wins
  c.noise_injection = false;
  c.mode = EmMode::kernel;
  CHECK_FALSE(c.injection_enabled());
}

TEST_CASE("config json round trip") {
  EmConfig c;
  c.max_iters = 17;
  c.tol = 5e-4;
  c.alpha = 0.25;
  c.gamma = 0.2;
  c.mode = EmMode::kernel;
  c.noise_injection = false;
  c.prune = false;
  c.lambda = 0.125;
  c.lambda_grid = true;
  c.max_lag = 3;
  c.num_features = 99;
  c.bandwidth = 2.5;
  c.identity_map = true;
  c.seed = 987654321;

  const auto back = parse_em_config_json(to_json(c));
  CHECK(back.max_iters == c.max_iters);
  CHECK(back.tol == c.tol);
  CHECK(back.alpha == c.alpha);
  CHECK(back.gamma == c.gamma);
  CHECK(back.mode == c.mode);
  REQUIRE(back.noise_injection.has_value());
  CHECK(*back.noise_injection == false);
  CHECK(back.prune == c.prune);
  CHECK(back.lambda == c.lambda);
  CHECK(back.lambda_grid == c.lambda_grid);
  CHECK(back.max_lag == c.max_lag);
  CHECK(back.num_features == c.num_features);
  CHECK(back.bandwidth == c.bandwidth);
  CHECK(back.identity_map == c.identity_map);
  CHECK(back.seed == c.seed);

  // tri-state default survives a round trip as "unset"
  EmConfig d;
  CHECK_FALSE(parse_em_config_json(to_json(d)).noise_injection.has_value());

  CHECK_THROWS_AS(parse_em_config_json("{\"lambda_penalty\": 1}"), ValidationError);
  CHECK_THROWS_AS(parse_em_config_json("{\"mode\": \"cubic\"}"), ValidationError);
  CHECK_THROWS_AS(parse_em_config_json("{broken"), ValidationError);
}

TEST_CASE("initialization interpolates gaps and mean-fills boundaries") {
  Matrix v(6, 2);
  v << 1.0, 10.0,
       0.0, 20.0,
       3.0, 30.0,
       2.0, 40.0,
       0.0, 50.0,
       0.0, 60.0;
  BoolMatrix m = BoolMatrix::Constant(6, 2, true);
  m(1, 0) = false;  // interior gap between 1.0 and 3.0
  m(4, 0) = false;  // trailing run
  m(5, 0) = false;
  TimeSeriesDataset ds;
  ds.values = v;
  ds.mask = m;
  ds.var_names = default_var_names(2);

  EmConfig c;
  c.max_lag = 1;
  const auto st = initialize(ds, c);
  CHECK(st.completed.values(1, 0) == 2.0);  // midpoint of 1 and 3
  const double mean = (1.0 + 3.0 + 2.0) / 3.0;
  CHECK(st.completed.values(4, 0) == doctest::Approx(mean).epsilon(1e-15));
  CHECK(st.completed.values(5, 0) == doctest::Approx(mean).epsilon(1e-15));
  // observed entries and the fully observed column are untouched
  CHECK(st.completed.values(0, 0) == 1.0);
  CHECK(st.completed.values.col(1) == v.col(1));
  CHECK(same_bool(st.completed.mask, m));
  CHECK(st.iteration == 0);
  CHECK_FALSE(st.model_fitted);
  CHECK(st.graph.edge_count() == 0);
}

TEST_CASE("initialization handles leading runs and long gaps") {
  Matrix v(5, 1);
  v << 0.0, 0.0, 2.0, 0.0, 8.0;
  BoolMatrix m(5, 1);
  m << false, false, true, false, true;
  TimeSeriesDataset ds;
  ds.values = v;
  ds.mask = m;
  ds.var_names = {"y"};

  EmConfig c;
  c.max_lag = 1;
  const auto st = initialize(ds, c);
  const double mean = (2.0 + 8.0) / 2.0;
  CHECK(st.completed.values(0, 0) == mean);
  CHECK(st.completed.values(1, 0) == mean);
  CHECK(st.completed.values(3, 0) == 5.0);  // halfway from 2 to 8
}

TEST_CASE("initialization rejects unusable inputs") {
  Matrix v = Matrix::Zero(4, 2);
  TimeSeriesDataset ds = make_dataset(v);
  EmConfig c;
  c.max_lag = 2;

  SUBCASE("fully unobserved column") {
    ds.mask.col(1).setConstant(false);
    CHECK_THROWS_AS(initialize(ds, c), ValidationError);
  }
  SUBCASE("series not longer than the lag order") {
    c.max_lag = 4;
    CHECK_THROWS_AS(initialize(ds, c), ValidationError);
  }
}

TEST_CASE("initialization freezes map and lambda") {
  Rng rng(5);
  Matrix v(40, 3);
  for (Eigen::Index t = 0; t < 40; ++t)
    for (Eigen::Index j = 0; j < 3; ++j) v(t, j) = rng.normal();
  const auto ds = make_dataset(v);

  SUBCASE("linear mode uses the identity map") {
    EmConfig c;
    const auto st = initialize(ds, c);
    CHECK(st.map.identity);
    CHECK(st.sens.identity);
    CHECK(st.lambda == c.lambda);
  }
  SUBCASE("kernel mode draws a seeded feature map") {
    EmConfig c;
    c.mode = EmMode::kernel;
    c.num_features = 30;
    c.seed = 21;
    const auto st = initialize(ds, c);
    CHECK_FALSE(st.map.identity);
    CHECK(st.map.num_features == 30);
    CHECK(st.map.input_dim == 3);
    CHECK(st.map.bandwidth > 0.0);
    const auto again = initialize(ds, c);
    CHECK(same_matrix(st.map.frequencies, again.map.frequencies));
  }
  SUBCASE("grid selection lands on a grid value") {
    EmConfig c;
    c.lambda_grid = true;
    c.lambda = 123.0;  // ignored when the grid is active
    const auto st = initialize(ds, c);
    const bool on_grid = st.lambda == 0.01 || st.lambda == 0.05 || st.lambda == 0.1 ||
                         st.lambda == 0.2;
    CHECK(on_grid);
  }
}

TEST_CASE("e_step is a no-op before the first fit and an error afterwards") {
  Matrix v(4, 1);
  v << 1.0, 0.0, 2.0, 0.0;
  BoolMatrix m(4, 1);
  m << true, false, true, false;
  TimeSeriesDataset ds;
  ds.values = v;
  ds.mask = m;
  ds.var_names = {"y"};
  EmConfig c;
  c.max_lag = 1;

  auto st = initialize(ds, c);
  const Matrix before = st.completed.values;
  st = e_step(std::move(st), c);
  CHECK(same_matrix(st.completed.values, before));
  CHECK(st.impute_delta == 0.0);

  st.iteration = 1;  // past iteration 0 a fitted model is mandatory
  CHECK_THROWS_AS(st = e_step(std::move(st), c), std::logic_error);
}

TEST_CASE("e_step forward sweep reads freshly imputed lags") {
  Matrix v(3, 1);
  v << 1.0, 0.0, 0.0;
  BoolMatrix m(3, 1);
  m << true, false, false;
  TimeSeriesDataset ds;
  ds.values = v;
  ds.mask = m;
  ds.var_names = {"y"};

  EmConfig c;
  c.max_lag = 1;
  auto st = initialize(ds, c);
  CHECK(st.completed.values(1, 0) == 1.0);  // mean fill from the single observation

  st.model.coefficients = Matrix::Constant(1, 1, 0.8);
  st.model.intercepts = Vector::Zero(1);
  st.model.residuals = Matrix::Zero(2, 1);
  st.model_fitted = true;
  st.iteration = 1;

  st = e_step(std::move(st), c);
  CHECK(st.completed.values(0, 0) == 1.0);  // observed entry immutable
  CHECK(st.completed.values(1, 0) == doctest::Approx(0.8).epsilon(1e-15));
  // row 2 must see the updated row 1, not the initialization value
  CHECK(st.completed.values(2, 0) == doctest::Approx(0.64).epsilon(1e-15));
  CHECK(st.impute_delta == doctest::Approx(0.36).epsilon(1e-12));

  // rerunning from the fixpoint changes nothing
  const Matrix settled = st.completed.values;
  st = e_step(std::move(st), c);
  CHECK(same_matrix(st.completed.values, settled));
  CHECK(st.impute_delta == 0.0);
}

TEST_CASE("e_step noise injection bootstraps centered residuals") {
  Matrix v(3, 1);
  v << 1.0, 0.0, 0.0;
  BoolMatrix m(3, 1);
  m << true, false, false;
  TimeSeriesDataset ds;
  ds.values = v;
  ds.mask = m;
  ds.var_names = {"y"};

  EmConfig c;
  c.max_lag = 1;
  c.noise_injection = true;

  auto fitted_state = [&](std::uint64_t seed) {
    EmConfig cc = c;
    cc.seed = seed;
    auto st = initialize(ds, cc);
    st.model.coefficients = Matrix::Constant(1, 1, 0.8);
    st.model.intercepts = Vector::Zero(1);
    Matrix r(2, 1);
    r << 0.5, -0.5;  // already centered, so draws are exactly +-0.5
    st.model.residuals = r;
    st.model_fitted = true;
    st.iteration = 1;
    return e_step(std::move(st), cc);
  };

  // every draw is an element of the pool: x1 = 0.8 +- 0.5 exactly
  double mean = 0.0;
  bool all_in_pool = true;
  const int reps = 10000;
  for (int s = 0; s < reps; ++s) {
    const auto st = fitted_state(static_cast<std::uint64_t>(s));
    const double x1 = st.completed.values(1, 0);
    all_in_pool = all_in_pool &&
                  (std::abs(x1 - 0.3) < 1e-12 || std::abs(x1 - 1.3) < 1e-12);
    mean += x1;
  }
  mean /= reps;
  CHECK(all_in_pool);
  // injected noise is mean zero, so over reseeded runs the average imputation
  // approaches the deterministic prediction within 3 * residual_std / sqrt(reps)
  CHECK(std::abs(mean - 0.8) < 3.0 * 0.5 / 100.0);

  const auto a = fitted_state(7);
  const auto b = fitted_state(7);
  CHECK(same_matrix(a.completed.values, b.completed.values));
}

TEST_CASE("m_step recovers linear dynamics and is deterministic") {
  SyntheticConfig g;
  g.num_vars = 5;
  g.num_edges = 5;
  g.max_lag = 2;
  g.series_length = 3000;
  g.seed = 42;
  const auto sys = generate(g);

  EmConfig c;
  c.max_lag = 2;
  c.lambda = 1e-4;
  auto st = initialize(sys.dataset, c);
  st = m_step(std::move(st), c);
  CHECK(st.iteration == 1);
  CHECK(st.model_fitted);
  CHECK(st.model.converged);

  // with a vanishing penalty the raw projection is the signed coefficient
  // tensor, which estimates the generating weights consistently
  for (int tau = 1; tau <= 2; ++tau) {
    const double err = (st.raw_weights.lag(tau) - sys.weights.lag(tau)).cwiseAbs().maxCoeff();
    CHECK(err < 0.05);
  }
  // first fit measures the step from the zero tensor
  CHECK(st.weight_delta == st.raw_weights.max_abs());

  auto st2 = initialize(sys.dataset, c);
  st2 = m_step(std::move(st2), c);
  CHECK(same_weights(st.raw_weights, st2.raw_weights));
}

TEST_CASE("m_step is near exact on a noiseless target equation") {
  // X3 is an exact linear function of lagged exogenous drivers, so its row of
  // the fit carries no statistical error, only the vanishing penalty bias
  Rng rng(8);
  const int T = 1500;
  Matrix x(T, 3);
  for (int t = 0; t < T; ++t) {
    x(t, 0) = rng.normal();
    x(t, 1) = rng.normal();
    x(t, 2) = t >= 2 ? 0.7 * x(t - 1, 0) - 0.5 * x(t - 2, 1) : rng.normal();
  }
  EmConfig c;
  c.max_lag = 2;
  c.lambda = 1e-4;
  auto st = initialize(make_dataset(x), c);
  st = m_step(std::move(st), c);

  CHECK(std::abs(st.raw_weights.lag(1)(2, 0) - 0.7) < 1e-2);
  CHECK(std::abs(st.raw_weights.lag(2)(2, 1) - (-0.5)) < 1e-2);
  // soft-thresholding keeps the rest of the noiseless row at (near) zero
  for (int tau = 1; tau <= 2; ++tau)
    for (int j = 0; j < 3; ++j) {
      if ((tau == 1 && j == 0) || (tau == 2 && j == 1)) continue;
      CHECK(std::abs(st.raw_weights.lag(tau)(2, j)) < 1e-3);
    }
}

TEST_CASE("smoothing recursion endpoints and exactness") {
  EmConfig c;
  c.max_lag = 1;
  EmState st;
  st.completed = make_dataset(Matrix::Zero(4, 2));
  st.graph = LagGraph::empty(1, 2);
  st.raw_weights = LagWeightTensor::zero(1, 2);
  st.smoothed_weights = LagWeightTensor::zero(1, 2);
  st.raw_weights.lag(1) << 0.25, 0.0, 0.5, 1.0;
  st.smoothed_weights.lag(1) << 0.5, 1.0, 0.25, 0.0;

  SUBCASE("iteration 1 copies the raw tensor regardless of alpha") {
    st.iteration = 1;
    c.alpha = 0.9;
    const auto out = smooth_and_threshold(std::move(st), c);
    CHECK(same_matrix(out.smoothed_weights.lag(1), out.raw_weights.lag(1)));
  }
  SUBCASE("alpha 0 forgets history") {
    st.iteration = 2;
    c.alpha = 0.0;
    const auto out = smooth_and_threshold(std::move(st), c);
    CHECK(same_matrix(out.smoothed_weights.lag(1), out.raw_weights.lag(1)));
  }
  SUBCASE("alpha 1 keeps history") {
    st.iteration = 2;
    c.alpha = 1.0;
    Matrix prev = st.smoothed_weights.lag(1);
    const auto out = smooth_and_threshold(std::move(st), c);
    CHECK(same_matrix(out.smoothed_weights.lag(1), prev));
  }
  SUBCASE("recursion is exact on dyadic inputs") {
    st.iteration = 2;
    c.alpha = 0.5;
    const auto out = smooth_and_threshold(std::move(st), c);
    Matrix expect(2, 2);
    expect << 0.375, 0.5, 0.375, 0.5;
    CHECK(same_matrix(out.smoothed_weights.lag(1), expect));
  }
}

TEST_CASE("thresholding normalizes per lag") {
  EmConfig c;
  c.max_lag = 2;
  c.gamma = 0.1;
  EmState st;
  st.iteration = 1;
  st.completed = make_dataset(Matrix::Zero(5, 2));
  st.graph = LagGraph::empty(2, 2);
  st.raw_weights = LagWeightTensor::zero(2, 2);
  st.smoothed_weights = LagWeightTensor::zero(2, 2);
  st.raw_weights.lag(1) << 1.0, 0.05, -0.2, 0.0;
  st.raw_weights.lag(2) << 0.02, 0.0, 0.0, 0.01;  // small scale, own normalizer

  auto out = smooth_and_threshold(std::move(st), c);
  CHECK(out.graph.lag(1)(0, 0));
  CHECK_FALSE(out.graph.lag(1)(0, 1));  // 0.05 / 1.0 = 0.05 <= 0.1
  CHECK(out.graph.lag(1)(1, 0));        // sign does not matter
  CHECK_FALSE(out.graph.lag(1)(1, 1));
  CHECK(out.graph.lag(2)(0, 0));  // 0.02 / 0.02 = 1
  CHECK(out.graph.lag(2)(1, 1));  // 0.01 / 0.02 = 0.5
  CHECK(out.graph.edge_count() == 4);
  CHECK(out.graph.summary(0, 0));
  CHECK(out.graph.summary(1, 1));

  SUBCASE("gamma at or above 1 clears every edge") {
    EmConfig c1 = c;
    c1.gamma = 1.0;
    out.iteration = 1;
    const auto cleared = smooth_and_threshold(std::move(out), c1);
    CHECK(cleared.graph.edge_count() == 0);
  }
}

TEST_CASE("pruning drops a mediated edge and keeps the chain") {
  const auto ds = chain_dataset(1200, 0.1, 99);
  EmConfig c;
  c.max_lag = 2;

  EmState st;
  st.completed = ds;
  st.map = KernelFeatureMap::identity_map(3);
  st.graph = LagGraph::empty(2, 3);
  st.graph.lag(1)(1, 0) = true;  // X2 <- X1, true
  st.graph.lag(1)(2, 1) = true;  // X3 <- X2, true
  st.graph.lag(2)(2, 0) = true;  // X3 <- X1 at lag 2, mediated
  st.graph.refresh_summary();

  const auto out = prune(st, c);
  CHECK(out.graph.lag(1)(1, 0));
  CHECK(out.graph.lag(1)(2, 1));
  CHECK_FALSE(out.graph.lag(2)(2, 0));
  CHECK(out.graph.edge_count() == 2);

  SUBCASE("an empty graph passes through untouched") {
    st.graph = LagGraph::empty(2, 3);
    const auto empty_out = prune(st, c);
    CHECK(empty_out.graph.edge_count() == 0);
  }
}

TEST_CASE("pruning keeps genuine parents across random systems") {
  long lost = 0;
  long total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticConfig g;
    g.num_vars = 5;
    g.num_edges = 6;
    g.max_lag = 2;
    g.series_length = 2000;
    g.seed = 1000 + seed;
    const auto sys = generate(g);

    EmConfig c;
    c.max_lag = 2;
    EmState st;
    st.completed = sys.dataset;
    st.map = KernelFeatureMap::identity_map(5);
    st.graph = sys.graph;

    const auto out = prune(st, c);
    total += sys.graph.edge_count();
    lost += sys.graph.edge_count() - out.graph.edge_count();
  }
  CHECK(total == 20 * 6);
  CHECK(lost <= 1);
}

TEST_CASE("pruning skips targets with more parameters than rows") {
  Rng rng(3);
  Matrix v(5, 3);
  for (Eigen::Index t = 0; t < 5; ++t)
    for (Eigen::Index j = 0; j < 3; ++j) v(t, j) = rng.normal();
  EmConfig c;
  c.max_lag = 1;
  EmState st;
  st.completed = make_dataset(v);
  st.map = KernelFeatureMap::identity_map(3);
  st.graph = LagGraph::empty(1, 3);
  st.graph.lag(1).row(0).setConstant(true);  // 3 parents, N = 4 usable rows
  st.graph.refresh_summary();

  CerrCapture capture;
  const auto out = prune(st, c);
  CHECK(out.graph.edge_count() == 3);  // unchanged
  CHECK(capture.text().find("skipping") != std::string::npos);
}

TEST_CASE("kernel pruning warns when imputation was deterministic") {
  const auto ds = chain_dataset(300, 0.5, 17);
  EmConfig c;
  c.max_lag = 1;
  c.mode = EmMode::kernel;
  c.num_features = 20;
  c.noise_injection = false;
  auto st = initialize(ds, c);
  st.graph.lag(1)(1, 0) = true;
  st.graph.refresh_summary();

  CerrCapture capture;
  const auto out = prune(std::move(st), c);
  CHECK(capture.text().find("WARNING") != std::string::npos);
  CHECK(out.graph.lag(1)(1, 0));  // a strong linear link survives the kernel test
}

TEST_CASE("identity-map kernel run equals linear run bit for bit") {
  SyntheticConfig g;
  g.num_vars = 6;
  g.num_edges = 8;
  g.max_lag = 2;
  g.series_length = 600;
  g.missing_rate = 0.3;
  g.seed = 7;
  const auto sys = generate(g);

  EmConfig lin;
  lin.max_lag = 2;
  lin.max_iters = 10;
  lin.seed = 5;
  EmConfig ker = lin;
  ker.mode = EmMode::kernel;
  ker.identity_map = true;

  const auto a = run(sys.dataset, lin);
  const auto b = run(sys.dataset, ker);
  CHECK(same_matrix(a.state.completed.values, b.state.completed.values));
  CHECK(same_graph(a.graph, b.graph));
  CHECK(same_weights(a.weights, b.weights));
}

TEST_CASE("run converges immediately on complete data") {
  SyntheticConfig g;
  g.num_vars = 4;
  g.num_edges = 5;
  g.series_length = 500;
  g.seed = 3;
  const auto sys = generate(g);

  EmConfig c;
  const auto res = run(sys.dataset, c);
  CHECK(res.state.converged);
  // nothing to impute: the second fit reproduces the first exactly
  CHECK(res.state.iteration == 2);
  CHECK(res.state.history.size() == 2);
  CHECK(res.state.history.back().impute_delta == 0.0);
  CHECK(res.state.history.back().weight_delta == 0.0);
  CHECK(same_matrix(res.state.completed.values, sys.dataset.values));
}

TEST_CASE("run keeps observed entries immutable") {
  SyntheticConfig g;
  g.num_vars = 4;
  g.num_edges = 5;
  g.series_length = 300;
  g.missing_rate = 0.4;
  g.seed = 11;
  const auto sys = generate(g);

  EmConfig c;
  c.max_iters = 5;
  c.noise_injection = true;  // keeps the imputations moving every iteration
  const auto res = run(sys.dataset, c);
  CHECK(same_bool(res.state.completed.mask, sys.dataset.mask));
  for (Eigen::Index t = 0; t < sys.dataset.rows(); ++t)
    for (Eigen::Index i = 0; i < sys.dataset.cols(); ++i)
      if (sys.dataset.mask(t, i)) {
        REQUIRE(res.state.completed.values(t, i) == sys.dataset.values(t, i));
      }
}

TEST_CASE("deterministic run shows a non-increasing objective trend") {
  SyntheticConfig g;
  g.num_vars = 5;
  g.num_edges = 6;
  g.max_lag = 2;
  g.series_length = 600;
  g.missing_rate = 0.3;
  g.seed = 29;
  const auto sys = generate(g);

  EmConfig c;
  c.max_lag = 2;
  const auto res = run(sys.dataset, c);
  const auto& h = res.state.history;
  REQUIRE(h.size() >= 2);
  for (size_t k = 0; k + 1 < h.size(); ++k) {
    CHECK(std::isfinite(h[k].objective));
    // deterministic refits may jitter slightly as imputations settle, but the
    // trend stays within a 5% band of monotone decrease
    CHECK(h[k + 1].objective <= h[k].objective * 1.05 + 1e-12);
  }
}

TEST_CASE("run is seed deterministic and seed sensitive under injection") {
  SyntheticConfig g;
  g.num_vars = 3;
  g.num_edges = 3;
  g.series_length = 300;
  g.missing_rate = 0.3;
  g.seed = 13;
  const auto sys = generate(g);

  EmConfig c;
  c.mode = EmMode::kernel;
  c.num_features = 50;
  c.max_iters = 8;
  c.seed = 100;
  const auto a = run(sys.dataset, c);
  const auto b = run(sys.dataset, c);
  CHECK(same_matrix(a.state.completed.values, b.state.completed.values));
  CHECK(same_graph(a.graph, b.graph));
  CHECK(same_weights(a.weights, b.weights));

  c.seed = 101;
  const auto other = run(sys.dataset, c);
  CHECK_FALSE(same_matrix(a.state.completed.values, other.state.completed.values));
}

TEST_CASE("run finds a single strong edge through missing data") {
  Rng rng(77);
  const int T = 800;
  Matrix x = Matrix::Zero(T, 2);
  x(0, 0) = rng.normal();
  for (int t = 1; t < T; ++t) {
    x(t, 0) = rng.normal();
    x(t, 1) = 0.8 * x(t - 1, 0) + 0.3 * rng.normal();
  }
  const auto masked = apply_mcar_mask(make_dataset(x), 0.3, 555);

  EmConfig c;
  c.max_lag = 2;
  const auto res = run(masked, c);
  CHECK(res.graph.lag(1)(1, 0));
  CHECK(res.graph.edge_count() <= 2);  // pruning clears chance edges
}

TEST_CASE("diagnostics render as one json object per line") {
  std::vector<IterationDiagnostics> h(2);
  h[0] = {1, 0.5, 0.25, 12.5, 3};
  h[1] = {2, 0.1, 0.05, 11.0, 4};
  const auto text = diagnostics_json_lines(h);
  std::istringstream in(text);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    ++rows;
    CHECK(j.at("iteration").get<int>() == rows);
    CHECK(j.contains("impute_delta"));
    CHECK(j.contains("weight_delta"));
    CHECK(j.contains("objective"));
    CHECK(j.contains("nnz_edges"));
  }
  CHECK(rows == 2);
  CHECK(nlohmann::json::parse(text.substr(0, text.find('\n'))).at("objective") == 12.5);
}
