#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "pep/pep_kernel.hpp"
#include "pep/rng.hpp"
#include "pep/stat_core.hpp"
#include "pep/types.hpp"

namespace pep {

// ---------------------------------------------------------------------------
// Estimates
// ---------------------------------------------------------------------------

enum class MarginalScheme { Scheme1, Scheme2, Quadrature, ClosedForm, BIC };

inline const char* to_string(MarginalScheme s) {
  switch (s) {
    case MarginalScheme::Scheme1: return "scheme1";
    case MarginalScheme::Scheme2: return "scheme2";
    case MarginalScheme::Quadrature: return "quadrature";
    case MarginalScheme::ClosedForm: return "closed-form";
    case MarginalScheme::BIC: return "bic";
  }
  return "?";
}

struct LogMarginalEstimate {
  double log_value = 0.0;
  double mc_se = 0.0;
  MarginalScheme scheme = MarginalScheme::ClosedForm;
  Index iterations = 0;
};

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes (cached per order)
// ---------------------------------------------------------------------------

namespace detail {

struct GlRule {
  std::vector<double> x;  // nodes on (-1, 1)
  std::vector<double> w;
};

inline GlRule compute_gauss_legendre(int m) {
  GlRule r;
  r.x.resize(m);
  r.w.resize(m);
  const int half = (m + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (m + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < m; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = m * (z * p0 - p1) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p0 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    r.x[i] = -z;
    r.x[m - 1 - i] = z;
    r.w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    r.w[m - 1 - i] = r.w[i];
  }
  return r;
}

inline const GlRule& gauss_legendre(int m) {
  static std::mutex mu;
  static std::map<int, GlRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(m);
  if (it == cache.end()) it = cache.emplace(m, compute_gauss_legendre(m)).first;
  return it->second;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quadrature Bayes factor vs the reference model (Jeffreys baseline,
// n* = n, delta = n)
// ---------------------------------------------------------------------------

/// log BF of a model with residual sum of squares rss_ell and dimension
/// d_ell against the nested reference model (rss_0, d_0), sample size n.
/// The integrand is evaluated in log space; Gauss-Legendre node counts are
/// doubled from 128 until two successive refinements agree to 1e-8 relative.
inline double jpep_bf_quadrature(double rss_ell, double rss_0, Index d_ell, Index d_0, Index n) {
  if (!(rss_ell > 0.0) || !(rss_0 > 0.0))
    throw DomainError("quadrature BF: residual sums of squares must be positive");
  if (!(n > d_ell) || !(d_ell >= d_0) || !(d_0 >= 1))
    throw DomainError("quadrature BF: need n > d_ell >= d_0 >= 1");
  const double ratio = rss_ell / rss_0;
  const double nn = static_cast<double>(n);
  const double e_sin = static_cast<double>(n - d_0 - 1);
  const double e_cos = static_cast<double>(n - d_ell - 1);
  const double e_num = 0.5 * static_cast<double>(n - d_ell);
  const double e_den = 0.5 * static_cast<double>(n - d_0);

  auto log_integral = [&](int m) {
    const auto& rule = detail::gauss_legendre(m);
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> lf(rule.x.size());
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      const double phi = 0.25 * M_PI * (rule.x[i] + 1.0);
      const double s = std::sin(phi), c = std::cos(phi);
      const double s2 = s * s;
      lf[i] = e_sin * std::log(s) + e_cos * std::log(c) + e_num * std::log(nn + s2) -
              e_den * std::log(nn * ratio + s2);
      if (lf[i] > mx) mx = lf[i];
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < lf.size(); ++i) acc += rule.w[i] * std::exp(lf[i] - mx);
    return mx + std::log(0.25 * M_PI * acc);
  };

  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int m = 128; m <= 16384; m *= 2) {
    const double cur = log_integral(m);
    if (std::isfinite(prev) && std::abs(std::expm1(cur - prev)) <= 1e-8) {
      return std::log(2.0) + std::lgamma(static_cast<double>(n - d_ell)) -
             2.0 * std::lgamma(0.5 * static_cast<double>(n - d_ell)) + cur;
    }
    prev = cur;
  }
  throw IntegrationError("quadrature BF: node doubling did not converge");
}

/// BIC difference: n log(rss_ell / rss_k) + (d_ell - d_k) log n.
inline double bic_delta(double rss_ell, Index d_ell, double rss_k, Index d_k, Index n) {
  if (!(rss_ell > 0.0) || !(rss_k > 0.0))
    throw DomainError("bic delta: residual sums of squares must be positive");
  if (n <= std::max(d_ell, d_k)) throw DomainError("bic delta: n must exceed model dimensions");
  return static_cast<double>(n) * std::log(rss_ell / rss_k) +
         static_cast<double>(d_ell - d_k) * std::log(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Posterior model probabilities
// ---------------------------------------------------------------------------

using ModelLogPrior = std::function<double(const ModelSpec&)>;

inline double uniform_model_log_prior(const ModelSpec&) { return 0.0; }

inline std::vector<double> posterior_model_probs(
    const std::vector<LogMarginalEstimate>& estimates, const std::vector<ModelSpec>& models,
    const ModelLogPrior& log_prior = uniform_model_log_prior) {
  if (estimates.empty() || estimates.size() != models.size())
    throw DimensionError("posterior probabilities: estimate/model size mismatch");
  Vector lw(static_cast<Index>(estimates.size()));
  for (std::size_t i = 0; i < estimates.size(); ++i)
    lw[static_cast<Index>(i)] = estimates[i].log_value + log_prior(models[i]);
  const double lse = logsumexp(lw);
  std::vector<double> probs(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i)
    probs[i] = std::exp(lw[static_cast<Index>(i)] - lse);
  return probs;
}

// ---------------------------------------------------------------------------
// Monte-Carlo marginal-likelihood schemes
// ---------------------------------------------------------------------------

namespace detail {

inline LogMarginalEstimate finish_estimate(double base, const Vector& log_ratios,
                                           MarginalScheme scheme) {
  const LogMeanResult lm = log_mean_exp(log_ratios);
  LogMarginalEstimate e;
  e.log_value = base + lm.log_mean;
  e.mc_se = lm.se;
  e.scheme = scheme;
  e.iterations = log_ratios.size();
  return e;
}

}  // namespace detail

/// Closed-form baseline marginal of the actual data under the g-prior,
/// m^N(y | X, X*). Proper hyper-parameters required.
inline double gprior_marginal(const Vector& y, const Matrix& X, const TrainingDesign& training,
                              const PepConfig& cfg) {
  if (cfg.baseline != Baseline::GPrior) throw WrongBaselineError("g-prior baseline required");
  return PepModel(y, X, training, cfg).baseline_data_marginal();
}

/// Scheme 1: draws from m(y*|y), ratio of prior predictives against the
/// reference model. Needs the proper g-prior baseline marginal.
inline LogMarginalEstimate pep_marginal_scheme1(const PepModel& model, const PepModel& null_model,
                                                Index T, Rng& rng) {
  if (model.config().baseline != Baseline::GPrior)
    throw WrongBaselineError("scheme 1 requires the g-prior baseline");
  const Matrix Ys = model.sample_proposal(T, rng);
  const Vector lr = null_model.log_prior_pred_batch(Ys) - model.log_prior_pred_batch(Ys);
  return detail::finish_estimate(model.baseline_data_marginal(), lr, MarginalScheme::Scheme1);
}

/// Scheme 2: draws from m(y*|y), ratios of conditional marginals and
/// predictives; works under either baseline. With formal hyper-parameters
/// the reference-model data marginal is undefined, so the returned value is
/// relative to it (Bayes factors and model probabilities are unaffected).
inline LogMarginalEstimate pep_marginal_scheme2(const PepModel& model, const PepModel& null_model,
                                                Index T, Rng& rng) {
  const Matrix Ys = model.sample_proposal(T, rng);
  const Vector lr = model.log_cond_marginal_batch(Ys) - null_model.log_cond_marginal_batch(Ys) +
                    null_model.log_proposal_batch(Ys) - model.log_proposal_batch(Ys);
  double base = 0.0;
  const PepConfig& ncfg = null_model.config();
  if (ncfg.baseline == Baseline::Jeffreys || ncfg.proper_hyper())
    base = null_model.baseline_data_marginal();
  return detail::finish_estimate(base, lr, MarginalScheme::Scheme2);
}

namespace detail {

inline PepModel make_null_model(const Vector& y, const TrainingDesign& training,
                                const PepConfig& cfg) {
  return PepModel(y, Matrix::Ones(y.size(), 1), null_training_design(training), cfg);
}

}  // namespace detail

inline LogMarginalEstimate pep_marginal_scheme1(const Vector& y, const Matrix& X,
                                                const TrainingDesign& training,
                                                const PepConfig& cfg, Index T, Rng& rng) {
  PepModel model(y, X, training, cfg);
  PepModel null_model = detail::make_null_model(y, training, cfg);
  return pep_marginal_scheme1(model, null_model, T, rng);
}

inline LogMarginalEstimate pep_marginal_scheme2(const Vector& y, const Matrix& X,
                                                const TrainingDesign& training,
                                                const PepConfig& cfg, Index T, Rng& rng,
                                                std::optional<PepConfig> null_cfg = {}) {
  PepModel model(y, X, training, cfg);
  PepModel null_model = detail::make_null_model(y, training, null_cfg.value_or(cfg));
  return pep_marginal_scheme2(model, null_model, T, rng);
}

// ---------------------------------------------------------------------------
// Reusable per-dataset estimator
// ---------------------------------------------------------------------------

enum class MarginalMethod { Auto, Scheme1, Scheme2, Quadrature, BIC };

inline const char* to_string(MarginalMethod m) {
  switch (m) {
    case MarginalMethod::Auto: return "auto";
    case MarginalMethod::Scheme1: return "1";
    case MarginalMethod::Scheme2: return "2";
    case MarginalMethod::Quadrature: return "quadrature";
    case MarginalMethod::BIC: return "bic";
  }
  return "?";
}

struct EstimatorOptions {
  MarginalMethod method = MarginalMethod::Auto;
  Index iterations = 1000;
  std::uint64_t seed = 0;
};

/// Shared engine for estimating many models on one data set. Each model gets
/// its own RNG stream keyed by (seed, model hash), so estimates do not depend
/// on evaluation order and are safe to compute concurrently.
class MarginalEstimator {
 public:
  MarginalEstimator(const Dataset& data, const PepConfig& cfg, const EstimatorOptions& opt)
      : data_(&data), opt_(opt) {
    cfg_ = cfg.resolved(data.n(), data.p());
    method_ = opt.method;
    if (method_ == MarginalMethod::Auto)
      method_ = cfg_.baseline == Baseline::GPrior ? MarginalMethod::Scheme1
                                                  : MarginalMethod::Scheme2;
    if (method_ == MarginalMethod::Quadrature) {
      if (cfg_.baseline != Baseline::Jeffreys)
        throw WrongBaselineError("quadrature method requires the jeffreys baseline");
      if (cfg_.n_star != data.n() || cfg_.delta != static_cast<double>(data.n()))
        throw DomainError("quadrature method requires n* = n and delta = n");
      SufficientStats s0 = ols(data.y, Matrix::Ones(data.n(), 1));
      null_rss_ = s0.rss;
    }
    if (method_ == MarginalMethod::Scheme1 || method_ == MarginalMethod::Scheme2) {
      const ModelSpec null_spec = ModelSpec::null_model(data.p());
      null_training_ = make_training_design(data, null_spec, cfg_);
      null_model_ = std::make_shared<PepModel>(data.y, build_design(data, null_spec),
                                               null_training_, cfg_);
    }
  }

  const PepConfig& config() const { return cfg_; }
  MarginalMethod method() const { return method_; }
  Index iterations() const { return opt_.iterations; }

  LogMarginalEstimate estimate(const ModelSpec& model) const {
    const Matrix X = build_design(*data_, model);
    switch (method_) {
      case MarginalMethod::Scheme1: {
        PepModel m(data_->y, X, make_training_design(*data_, model, cfg_), cfg_);
        Rng rng = model_stream(model);
        return pep_marginal_scheme1(m, *null_model_, opt_.iterations, rng);
      }
      case MarginalMethod::Scheme2: {
        PepModel m(data_->y, X, make_training_design(*data_, model, cfg_), cfg_);
        Rng rng = model_stream(model);
        return pep_marginal_scheme2(m, *null_model_, opt_.iterations, rng);
      }
      case MarginalMethod::Quadrature: {
        SufficientStats s = ols(data_->y, X);
        LogMarginalEstimate e;
        e.log_value = jpep_bf_quadrature(s.rss, null_rss_, X.cols(), 1, data_->n());
        e.scheme = MarginalScheme::Quadrature;
        return e;
      }
      case MarginalMethod::BIC: {
        SufficientStats s = ols(data_->y, X);
        LogMarginalEstimate e;
        e.log_value = -0.5 * (static_cast<double>(data_->n()) * std::log(s.rss) +
                              static_cast<double>(X.cols()) *
                                  std::log(static_cast<double>(data_->n())));
        e.scheme = MarginalScheme::BIC;
        return e;
      }
      case MarginalMethod::Auto: break;
    }
    throw Error("unresolved marginal method");
  }

 private:
  Rng model_stream(const ModelSpec& model) const {
    return Rng::stream(opt_.seed, {tag_hash("marginal"), model.key_hash()});
  }

  const Dataset* data_;
  PepConfig cfg_;
  EstimatorOptions opt_;
  MarginalMethod method_ = MarginalMethod::Auto;
  TrainingDesign null_training_;
  std::shared_ptr<PepModel> null_model_;
  double null_rss_ = 0.0;
};

}  // namespace pep
