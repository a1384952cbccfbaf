#pragma once

#include <cmath>
#include <vector>

#include "pep/pep_kernel.hpp"
#include "pep/rng.hpp"
#include "pep/stat_core.hpp"
#include "pep/types.hpp"

namespace pep {

struct PosteriorDraws {
  Matrix betas;    // T x d
  Vector sigma2s;  // T
  double ess = 0.0;
};

/// Draws from the posterior of (beta, sigma^2) by sampling-importance-
/// resampling over the imaginary data: propose y* ~ m(y*|y), weight by the
/// posterior mixture measure, resample, then draw from the conditional
/// Normal-Inverse-Gamma given each resampled y*.
inline PosteriorDraws sample_posterior(const PepModel& model, Index T, Rng& rng) {
  if (T < 1) throw DomainError("sample_posterior: T must be positive");
  const Matrix Ys = model.sample_proposal(T, rng);

  // Mixture weight over the proposal reduces to the prior-predictive ratio
  // m_0(y*) / m_ell(y*); constants drop in self-normalization.
  PepModel null_model(model.y(), Matrix::Ones(model.n(), 1),
                      null_training_design(model.training()), model.config());
  Vector logw = null_model.log_prior_pred_kernel_batch(Ys) -
                model.log_prior_pred_kernel_batch(Ys);

  const double lse = logsumexp(logw);
  Vector w = (logw.array() - lse).exp();
  const double ess = 1.0 / w.squaredNorm();
  if (ess < 0.01 * static_cast<double>(T))
    throw DegenerateSamplerError("sample_posterior: effective sample size below 1% of T");

  // Multinomial resampling of proposal indices.
  Vector cum(T);
  double acc = 0.0;
  for (Index t = 0; t < T; ++t) {
    acc += w[t];
    cum[t] = acc;
  }
  cum[T - 1] = 1.0;
  std::vector<Index> pick(static_cast<std::size_t>(T));
  for (Index i = 0; i < T; ++i) {
    const double u = rng.next_double();
    Index lo = 0, hi = T - 1;
    while (lo < hi) {
      const Index mid = (lo + hi) / 2;
      if (cum[mid] < u) lo = mid + 1; else hi = mid;
    }
    pick[static_cast<std::size_t>(i)] = lo;
  }

  Matrix beta_tilde;
  Vector b_tilde;
  model.conditional_posterior_batch(Ys, beta_tilde, b_tilde);
  const double a_tilde = model.nig_a();
  const Matrix& L = model.nig_sigma_chol();
  const Index d = model.dim();

  PosteriorDraws out;
  out.betas.resize(T, d);
  out.sigma2s.resize(T);
  out.ess = ess;
  Vector z(d);
  for (Index i = 0; i < T; ++i) {
    const Index t = pick[static_cast<std::size_t>(i)];
    const double s2 = rng.next_inv_gamma(a_tilde, b_tilde[t]);
    rng.fill_normal(z);
    out.sigma2s[i] = s2;
    const Vector scaled = L.triangularView<Eigen::Lower>() * z;
    out.betas.row(i) = (beta_tilde.col(t) + std::sqrt(s2) * scaled).transpose();
  }
  return out;
}

inline PosteriorDraws sample_posterior(const Vector& y, const Matrix& X,
                                       const TrainingDesign& training, const PepConfig& cfg,
                                       Index T, Rng& rng) {
  PepModel model(y, X, training, cfg);
  return sample_posterior(model, T, rng);
}

/// Mean predictions per draw: row t is Xnew * beta^(t), no observation noise.
inline Matrix predict_rows(const PosteriorDraws& draws, const Matrix& Xnew) {
  if (Xnew.cols() != draws.betas.cols())
    throw DimensionError("predict_rows: design has " + std::to_string(Xnew.cols()) +
                         " columns for " + std::to_string(draws.betas.cols()) +
                         " coefficients");
  return draws.betas * Xnew.transpose();
}

/// Direct fit of the Gaussian linear model under the independence Jeffreys
/// prior: sigma^2 ~ IG((n-d)/2, RSS/2), beta | sigma^2 ~ N(beta_hat,
/// (X^T X)^{-1} sigma^2). Used as the no-selection reference fit.
inline PosteriorDraws sample_jeffreys_direct(const Vector& y, const Matrix& X, Index T, Rng& rng) {
  const SufficientStats s = ols(y, X);
  if (!(s.rss > 0.0)) throw DegenerateTrainingError("jeffreys direct fit: zero residual");
  const Index n = y.size(), d = X.cols();
  const double a = 0.5 * static_cast<double>(n - d);
  const double b = 0.5 * s.rss;
  PosteriorDraws out;
  out.betas.resize(T, d);
  out.sigma2s.resize(T);
  out.ess = static_cast<double>(T);
  Vector z(d);
  for (Index t = 0; t < T; ++t) {
    const double s2 = rng.next_inv_gamma(a, b);
    rng.fill_normal(z);
    out.sigma2s[t] = s2;
    const Vector scaled = s.xtx_chol.transpose().triangularView<Eigen::Upper>().solve(z);
    out.betas.row(t) = (s.beta_hat + std::sqrt(s2) * scaled).transpose();
  }
  return out;
}

}  // namespace pep
