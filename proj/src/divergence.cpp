#include "qsd/divergence.hpp"

#include <cmath>

#include "qsd/error.hpp"

namespace qsd {

namespace {

Matrix scatter(RowsView rows, const Vector& mean) {
  const RowMatrix centered = rows.rowwise() - mean.transpose();
  return centered.transpose() * centered;
}

// Adds a ridge when the covariance is (numerically) rank deficient. Returns
// true when the ridge was applied.
bool regularize_if_singular(Matrix& cov, double eps) {
  const auto d = cov.rows();
  const double trace = cov.trace();
  const double scale = trace > 0.0 ? trace / static_cast<double>(d) : 1.0;
  Eigen::LDLT<Matrix> ldlt(cov);
  bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive();
  if (!singular) {
    const double min_pivot = ldlt.vectorD().minCoeff();
    singular = !(min_pivot > eps * scale);
  }
  if (singular) cov.diagonal().array() += eps * scale;
  return singular;
}

double log_det_spd(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCovariance, "covariance is not positive definite");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// MLE log-determinant of a pooled window given by two blocks, without copying.
GaussianStats fit_pair(RowsView x, RowsView y, double eps, ComputeCounter* counter) {
  const Eigen::Index n = x.rows() + y.rows();
  GaussianStats s;
  s.n = n;
  s.estimator = Estimator::Mle;
  s.mean = (x.colwise().sum() + y.colwise().sum()).transpose() / static_cast<double>(n);
  s.covariance = (scatter(x, s.mean) + scatter(y, s.mean)) / static_cast<double>(n);
  s.regularized = regularize_if_singular(s.covariance, eps);
  s.log_det = log_det_spd(s.covariance);
  if (counter) counter->add_covariance();
  return s;
}

void check_pair(RowsView x, RowsView y, Eigen::Index min_rows) {
  if (x.cols() != y.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "windows have dimensions " + std::to_string(x.cols()) +
                                                  " and " + std::to_string(y.cols()));
  }
  if (x.rows() < min_rows || y.rows() < min_rows) {
    throw Error(ErrorKind::WindowTooSmall, "sub-windows need >= " + std::to_string(min_rows) +
                                               " rows, got " + std::to_string(x.rows()) + " and " +
                                               std::to_string(y.rows()));
  }
}

}  // namespace

void BicConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidConfig, "lambda must be non-negative");
  if (delta_k < 0) throw Error(ErrorKind::InvalidConfig, "delta_k must be positive (or 0 for default)");
  if (!(regularization_eps > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "regularization_eps must be positive");
  }
}

GaussianStats gaussian_fit(RowsView window, Estimator estimator, double regularization_eps,
                           ComputeCounter* counter) {
  const Eigen::Index n = window.rows();
  if (n < 2) throw Error(ErrorKind::WindowTooSmall, "gaussian fit needs >= 2 rows");
  GaussianStats s;
  s.n = n;
  s.estimator = estimator;
  s.mean = window.colwise().mean().transpose();
  const double divisor = estimator == Estimator::Mle ? static_cast<double>(n) : static_cast<double>(n - 1);
  s.covariance = scatter(window, s.mean) / divisor;
  s.regularized = regularize_if_singular(s.covariance, regularization_eps);
  s.log_det = log_det_spd(s.covariance);
  if (counter) counter->add_covariance();
  return s;
}

double delta_bic(RowsView x, RowsView y, const BicConfig& cfg, ComputeCounter* counter) {
  check_pair(x, y, 2);
  const auto d = x.cols();
  const GaussianStats sx = gaussian_fit(x, Estimator::Mle, cfg.regularization_eps, counter);
  const GaussianStats sy = gaussian_fit(y, Estimator::Mle, cfg.regularization_eps, counter);
  const GaussianStats ss = fit_pair(x, y, cfg.regularization_eps, counter);
  if (counter) counter->add_delta_bic();
  const double ns = static_cast<double>(ss.n);
  const double penalty = 0.5 * cfg.lambda * cfg.resolved_delta_k(d) * std::log(ns);
  return 0.5 * ns * ss.log_det - 0.5 * static_cast<double>(sx.n) * sx.log_det -
         0.5 * static_cast<double>(sy.n) * sy.log_det - penalty;
}

double delta_bic_split(RowsView window, Eigen::Index split, const BicConfig& cfg,
                       ComputeCounter* counter) {
  return delta_bic(window.topRows(split), window.bottomRows(window.rows() - split), cfg, counter);
}

double hotelling_t2(RowsView x, RowsView y, const T2Options& opt, ComputeCounter* counter) {
  check_pair(x, y, 1);
  const Eigen::Index nx = x.rows(), ny = y.rows(), ns = nx + ny;
  if (ns < 2) throw Error(ErrorKind::WindowTooSmall, "t2 needs >= 2 pooled rows");
  const Vector mx = x.colwise().mean().transpose();
  const Vector my = y.colwise().mean().transpose();
  const Vector ms = (x.colwise().sum() + y.colwise().sum()).transpose() / static_cast<double>(ns);
  Matrix cov = (scatter(x, ms) + scatter(y, ms)) / static_cast<double>(ns - 1);
  if (counter) {
    counter->add_covariance();
    counter->add_t2();
  }
  if (opt.regularize) {
    regularize_if_singular(cov, opt.regularization_eps);
  }
  Eigen::LDLT<Matrix> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.vectorD().minCoeff() > 0.0)) {
    throw Error(ErrorKind::SingularCovariance, "pooled covariance is singular");
  }
  const Vector delta = mx - my;
  const double q = delta.dot(ldlt.solve(delta));
  const double t2 = static_cast<double>(nx) * static_cast<double>(ny) / static_cast<double>(ns) * q;
  return std::max(0.0, t2);
}

double hotelling_t2_split(RowsView window, Eigen::Index split, const T2Options& opt,
                          ComputeCounter* counter) {
  return hotelling_t2(window.topRows(split), window.bottomRows(window.rows() - split), opt, counter);
}

}  // namespace qsd
