#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qsd/divergence.hpp"
#include "qsd/error.hpp"

using namespace qsd;

TEST_CASE("gaussian_fit: hand values") {
  RowMatrix x(2, 1);
  x << 0.0, 2.0;
  const GaussianStats mle = gaussian_fit(x, Estimator::Mle);
  CHECK(mle.mean(0) == 1.0);
  CHECK(mle.covariance(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_FALSE(mle.regularized);
  CHECK(mle.log_det == doctest::Approx(0.0));
  const GaussianStats ub = gaussian_fit(x, Estimator::Unbiased);
  CHECK(ub.covariance(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ub.n == 2);
}

TEST_CASE("gaussian_fit: constant rows are regularized to eps*I") {
  RowMatrix x(6, 3);
  for (Eigen::Index i = 0; i < 6; ++i) x.row(i) << 1.5, -2.0, 4.0;
  const GaussianStats s = gaussian_fit(x, Estimator::Mle, 1e-6);
  CHECK(s.regularized);
  CHECK((s.mean - x.row(0).transpose()).norm() == 0.0);
  CHECK((s.covariance - 1e-6 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-18);
  CHECK(std::isfinite(s.log_det));
}

TEST_CASE("gaussian_fit: fewer rows than dimensions is flagged and finite") {
  Rng rng(1);
  const RowMatrix x = oracle::gaussian_rows(rng, 5, 12);
  const GaussianStats s = gaussian_fit(x, Estimator::Mle);
  CHECK(s.regularized);
  CHECK(std::isfinite(s.log_det));
  CHECK((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gaussian_fit: window too small") {
  RowMatrix one(1, 2);
  one << 1.0, 2.0;
  try {
    gaussian_fit(one, Estimator::Mle);
    FAIL("expected WindowTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WindowTooSmall);
  }
}

TEST_CASE("delta_bic: identical halves with no penalty") {
  Rng rng(2);
  const RowMatrix x = oracle::gaussian_rows(rng, 60, 12);
  BicConfig cfg;
  cfg.lambda = 0.0;
  CHECK(std::abs(delta_bic(x, x, cfg)) < 1e-9);
}

TEST_CASE("delta_bic: closed form equals per-sample log-likelihood") {
  Rng rng(3);
  BicConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const RowMatrix x = oracle::correlated_rows(rng, 100, 12);
    const RowMatrix y = oracle::correlated_rows(rng, 100, 12);
    const double got = delta_bic(x, y, cfg);
    CHECK(oracle::rel_err(got, oracle::delta_bic(x, y, cfg.lambda)) < 1e-9);
  }
}

TEST_CASE("delta_bic: well separated 1-D windows") {
  Rng rng(4);
  RowMatrix x = oracle::gaussian_rows(rng, 100, 1, -10.0, 0.1);
  RowMatrix y = oracle::gaussian_rows(rng, 100, 1, 10.0, 0.1);
  CHECK(delta_bic(x, y, BicConfig{}) > 0.0);
}

TEST_CASE("delta_bic: strictly decreasing in lambda, penalty linear") {
  Rng rng(5);
  const RowMatrix x = oracle::gaussian_rows(rng, 40, 3);
  const RowMatrix y = oracle::gaussian_rows(rng, 50, 3, 0.5);
  BicConfig cfg;
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    cfg.lambda = lambda;
    const double v = delta_bic(x, y, cfg);
    CHECK(v < prev);
    prev = v;
  }
  cfg.lambda = 0.0;
  const double v0 = delta_bic(x, y, cfg);
  cfg.lambda = 1.0;
  const double v1 = delta_bic(x, y, cfg);
  CHECK(v0 - v1 == doctest::Approx(0.5 * 9.0 * std::log(90.0)).epsilon(1e-12));
}

TEST_CASE("delta_bic: custom delta_k and split form") {
  Rng rng(6);
  const RowMatrix w = oracle::gaussian_rows(rng, 80, 2);
  BicConfig cfg;
  CHECK(cfg.resolved_delta_k(12) == 90);
  CHECK(cfg.resolved_delta_k(2) == 5);
  cfg.delta_k = 7;
  CHECK(cfg.resolved_delta_k(2) == 7);
  CHECK(delta_bic_split(w, 30, cfg) == delta_bic(w.topRows(30), w.bottomRows(50), cfg));
}

TEST_CASE("delta_bic: errors") {
  RowMatrix a = RowMatrix::Random(10, 3), b = RowMatrix::Random(10, 4), c = RowMatrix::Random(1, 3);
  try {
    delta_bic(a, b, BicConfig{});
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
  try {
    delta_bic(a, c, BicConfig{});
    FAIL("expected WindowTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WindowTooSmall);
  }
  BicConfig bad;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("hotelling_t2: hand case is exactly 7") {
  RowMatrix x(4, 1), y(4, 1);
  x << 0, 0, 0, 0;
  y << 2, 2, 2, 2;
  CHECK(std::abs(hotelling_t2(x, y) - 7.0) < 1e-12);
  CHECK(std::abs(hotelling_t2(y, x) - 7.0) < 1e-12);
}

TEST_CASE("hotelling_t2: equal means give zero") {
  Rng rng(7);
  const RowMatrix x = oracle::gaussian_rows(rng, 30, 4);
  RowMatrix y = x.colwise().reverse();  // same rows, permuted
  CHECK(std::abs(hotelling_t2(x, y)) < 1e-12);
}

TEST_CASE("hotelling_t2: oracle, symmetry, non-negativity, affine invariance") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(12));
    const RowMatrix x = oracle::correlated_rows(rng, 20 + static_cast<Eigen::Index>(rng.below(60)), d);
    const RowMatrix y = oracle::correlated_rows(rng, 20 + static_cast<Eigen::Index>(rng.below(60)), d);
    const double t = hotelling_t2(x, y);
    CHECK(t >= 0.0);
    CHECK(oracle::rel_err(t, oracle::hotelling_t2(x, y)) < 1e-9);
    CHECK(oracle::rel_err(t, hotelling_t2(y, x)) < 1e-12);
    CHECK(oracle::rel_err(t, hotelling_t2(RowMatrix(3.7 * x), RowMatrix(3.7 * y))) < 1e-9);
  }
}

TEST_CASE("hotelling_t2: singular pooled covariance") {
  RowMatrix x(3, 2), y(3, 2);
  x << 0, 0, 1, 0, 2, 0;
  y << 3, 0, 4, 0, 5, 0;  // second feature is constant
  T2Options strict;
  strict.regularize = false;
  try {
    hotelling_t2(x, y, strict);
    FAIL("expected SingularCovariance");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularCovariance);
  }
  CHECK(std::isfinite(hotelling_t2(x, y)));
}

TEST_CASE("counters: 3 covariances per delta_bic, 1 per t2") {
  Rng rng(9);
  ComputeCounter c;
  const RowMatrix x = oracle::gaussian_rows(rng, 20, 3), y = oracle::gaussian_rows(rng, 25, 3);
  delta_bic(x, y, BicConfig{}, &c);
  CHECK(c.snapshot() == CounterSnapshot{3, 1, 0});
  hotelling_t2(x, y, T2Options{}, &c);
  CHECK(c.snapshot() == CounterSnapshot{4, 1, 1});
  gaussian_fit(x, Estimator::Mle, 1e-6, &c);
  CHECK(c.snapshot().covariance_count == 5);
  c.reset();
  CHECK(c.snapshot() == CounterSnapshot{});
}
