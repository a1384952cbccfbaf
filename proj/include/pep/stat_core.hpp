#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "pep/types.hpp"

namespace pep {

inline constexpr double kCholPivotRelTol = 1e-10;

// ---------------------------------------------------------------------------
// Cholesky with a relative pivot threshold
// ---------------------------------------------------------------------------

/// Lower Cholesky factor of a symmetric matrix. Pivots are checked against
/// kCholPivotRelTol times the largest diagonal entry; a failing pivot throws
/// RankDeficientError when `gram` is set (Gram matrices of design columns)
/// and NotPositiveDefiniteError otherwise.
inline Matrix chol_lower(const Matrix& A, bool gram, const std::string& context) {
  const Index d = A.rows();
  if (A.cols() != d) throw DimensionError("chol: matrix not square");
  Matrix L = Matrix::Zero(d, d);
  const double max_diag = d > 0 ? A.diagonal().maxCoeff() : 0.0;
  const double tol = kCholPivotRelTol * std::max(max_diag, 0.0);
  for (Index j = 0; j < d; ++j) {
    double pivot = A(j, j) - L.row(j).head(j).squaredNorm();
    if (!(pivot > tol)) {
      if (gram) throw RankDeficientError("rank-deficient matrix in " + context);
      throw NotPositiveDefiniteError("matrix not positive definite in " + context);
    }
    L(j, j) = std::sqrt(pivot);
    for (Index i = j + 1; i < d; ++i) {
      double s = A(i, j) - (L.row(i).head(j) * L.row(j).head(j).transpose()).value();
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

inline double logdet_from_chol(const Matrix& L) {
  return 2.0 * L.diagonal().array().log().sum();
}

/// Solve (L L^T) x = b given the lower factor L.
inline Vector chol_solve(const Matrix& L, const Vector& b) {
  Vector x = L.triangularView<Eigen::Lower>().solve(b);
  return L.transpose().triangularView<Eigen::Upper>().solve(x);
}

inline Matrix chol_solve_mat(const Matrix& L, const Matrix& B) {
  Matrix X = L.triangularView<Eigen::Lower>().solve(B);
  return L.transpose().triangularView<Eigen::Upper>().solve(X);
}

/// Dense inverse from a lower Cholesky factor (small d only).
inline Matrix inverse_from_chol(const Matrix& L) {
  return chol_solve_mat(L, Matrix::Identity(L.rows(), L.rows()));
}

// ---------------------------------------------------------------------------
// Design construction and least squares
// ---------------------------------------------------------------------------

/// Model design matrix: leading intercept column, then the selected
/// covariates in ascending index order.
inline Matrix build_design(const Dataset& data, const ModelSpec& model) {
  if (model.p() != data.p())
    throw DimensionError("model has " + std::to_string(model.p()) +
                         " indicators for " + std::to_string(data.p()) +
                         " covariates");
  const auto idx = model.included();
  Matrix X(data.n(), 1 + static_cast<Index>(idx.size()));
  X.col(0).setOnes();
  for (std::size_t k = 0; k < idx.size(); ++k) X.col(1 + static_cast<Index>(k)) = data.X.col(idx[k]);
  return X;
}

struct SufficientStats {
  Vector beta_hat;
  double rss = 0.0;
  Matrix xtx_chol;  // lower factor of X^T X
  Index n_rows = 0;
};

inline SufficientStats ols(const Vector& y, const Matrix& X) {
  if (X.rows() != y.size()) throw DimensionError("ols: row mismatch");
  if (X.rows() <= X.cols())
    throw RankDeficientError("ols: need more rows than columns");
  SufficientStats s;
  s.n_rows = X.rows();
  s.xtx_chol = chol_lower(X.transpose() * X, /*gram=*/true, "ols");
  s.beta_hat = chol_solve(s.xtx_chol, Vector(X.transpose() * y));
  s.rss = (y - X * s.beta_hat).squaredNorm();
  return s;
}

// ---------------------------------------------------------------------------
// Log densities
// ---------------------------------------------------------------------------

/// Log density of the n-dimensional Student distribution with dof degrees of
/// freedom, location mu and scale matrix given by its lower Cholesky factor.
inline double log_mvstudent_chol(const Vector& y, double dof, const Vector& mu,
                                 const Matrix& scale_chol) {
  if (!(dof > 0.0)) throw NonpositiveDofError("student dof must be positive");
  const Index n = y.size();
  if (mu.size() != n || scale_chol.rows() != n) throw DimensionError("student: size mismatch");
  const Vector z = scale_chol.triangularView<Eigen::Lower>().solve(y - mu);
  const double qf = z.squaredNorm();
  return std::lgamma(0.5 * (dof + n)) - std::lgamma(0.5 * dof) -
         0.5 * n * std::log(dof * M_PI) - 0.5 * logdet_from_chol(scale_chol) -
         0.5 * (dof + n) * std::log1p(qf / dof);
}

inline double log_mvstudent(const Vector& y, double dof, const Vector& mu, const Matrix& scale) {
  return log_mvstudent_chol(y, dof, mu, chol_lower(scale, /*gram=*/false, "student scale"));
}

/// Log Inverse-Gamma density: b^a/Gamma(a) y^{-(a+1)} e^{-b/y}.
inline double log_invgamma(double y, double a, double b) {
  if (!(y > 0.0)) throw DomainError("invgamma: y must be positive");
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("invgamma: a, b must be positive");
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(y) - b / y;
}

// ---------------------------------------------------------------------------
// Structured quadratic forms
// ---------------------------------------------------------------------------

/// Factored representation of M = I_n + c X A^{-1} X^T. Quadratic forms and
/// the log determinant go through the d x d identity
///   det(I + c X A^{-1} X^T) = det(A + c X^T X) / det(A),
///   M^{-1} = I - X (A/c + X^T X)^{-1} X^T,
/// so the n x n matrix is never materialized.
class StructuredForm {
 public:
  StructuredForm(Matrix X, const Matrix& a_chol, double c)
      : X_(std::move(X)), c_(c) {
    if (!(c >= 0.0)) throw DomainError("structured form: c must be nonnegative");
    const Index d = X_.cols();
    if (a_chol.rows() != d) throw DimensionError("structured form: factor size mismatch");
    if (c_ > 0.0 && d > 0) {
      const Matrix A = a_chol * a_chol.transpose();
      const Matrix XtX = X_.transpose() * X_;
      b_chol_ = chol_lower(A / c_ + XtX, /*gram=*/false, "structured form");
      logdet_ = logdet_from_chol(chol_lower(A + c_ * XtX, false, "structured form")) -
                logdet_from_chol(a_chol);
    } else {
      logdet_ = 0.0;
    }
  }

  double c() const { return c_; }
  double logdet() const { return logdet_; }
  const Matrix& design() const { return X_; }

  /// r^T M^{-1} r
  double quad(const Vector& r) const {
    if (r.size() != X_.rows()) throw DimensionError("structured form: vector length mismatch");
    if (c_ == 0.0 || X_.cols() == 0) return r.squaredNorm();
    const Vector w = b_chol_.triangularView<Eigen::Lower>().solve(X_.transpose() * r);
    return r.squaredNorm() - w.squaredNorm();
  }

  /// Columnwise r^T M^{-1} r for a matrix of residual columns.
  Vector quad_batch(const Matrix& R) const {
    Vector out = R.colwise().squaredNorm().transpose();
    if (c_ == 0.0 || X_.cols() == 0) return out;
    Matrix W = b_chol_.triangularView<Eigen::Lower>().solve(Matrix(X_.transpose() * R));
    out -= W.colwise().squaredNorm().transpose();
    return out;
  }

  /// M^{-1} r as an explicit vector.
  Vector solve(const Vector& r) const {
    if (c_ == 0.0 || X_.cols() == 0) return r;
    return r - X_ * chol_solve(b_chol_, Vector(X_.transpose() * r));
  }

 private:
  Matrix X_;
  Matrix b_chol_;  // chol of A/c + X^T X
  double c_ = 0.0;
  double logdet_ = 0.0;
};

/// One-shot interface: quadratic form and log determinant of
/// I + c X A^{-1} X^T at y, with A supplied by its lower Cholesky factor.
inline std::pair<double, double> structured_form(const Vector& y, const Matrix& X,
                                                 const Matrix& xstar_chol, double c) {
  StructuredForm f(X, xstar_chol, c);
  return {f.quad(y), f.logdet()};
}

// ---------------------------------------------------------------------------
// Log-sum-exp
// ---------------------------------------------------------------------------

inline double logsumexp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (std::isnan(x)) throw DomainError("logsumexp: NaN input");
    if (x > mx) mx = x;
  }
  if (!(mx > -std::numeric_limits<double>::infinity()))
    throw AllNegInfError("logsumexp: all entries are -inf");
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double logsumexp(const Vector& v) {
  return logsumexp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

struct LogMeanResult {
  double log_mean = 0.0;
  double se = 0.0;  // delta-method standard error of log_mean
};

/// log(mean(exp(v))) with the delta-method standard error
/// sd(exp(v - max)) / (mean(exp(v - max)) * sqrt(T)).
inline LogMeanResult log_mean_exp(const Vector& v) {
  const Index t = v.size();
  if (t == 0) throw DomainError("log_mean_exp: empty input");
  const double total = logsumexp(v);
  LogMeanResult r;
  r.log_mean = total - std::log(static_cast<double>(t));
  if (t == 1) return r;
  const double mx = v.maxCoeff();
  const Eigen::ArrayXd e = (v.array() - mx).exp();
  const double mean = e.mean();
  const double var = (e - mean).square().sum() / static_cast<double>(t - 1);
  r.se = std::sqrt(var / static_cast<double>(t)) / mean;
  return r;
}

}  // namespace pep
