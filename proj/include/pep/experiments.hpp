#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "pep/marginal.hpp"
#include "pep/posterior.hpp"
#include "pep/rng.hpp"
#include "pep/search.hpp"
#include "pep/types.hpp"

namespace pep {

// ---------------------------------------------------------------------------
// Nott-Kohn simulated data
// ---------------------------------------------------------------------------

struct NottKohnReplicate {
  Dataset dataset;  // n = 50, p = 15
  std::uint64_t seed = 0;
  ModelSpec true_gamma;  // nonzero effects X1, X5, X7, X11, X13
};

/// The Nott-Kohn generator: ten independent standard-normal covariates,
/// five more regressed on the first five, and a response driven by
/// X1, X5, X7, X11, X13 with noise sd 2.5. Bit-exact per seed.
inline NottKohnReplicate nott_kohn_generate(std::uint64_t seed) {
  constexpr Index n = 50, p = 15;
  Rng rng = Rng::stream(seed, {tag_hash("nott-kohn")});
  NottKohnReplicate rep;
  rep.seed = seed;
  rep.dataset.X.resize(n, p);
  rng.fill_normal(rep.dataset.X.leftCols(10));
  for (Index j = 10; j < 15; ++j) {
    Vector mean = 0.3 * rep.dataset.X.col(0) + 0.5 * rep.dataset.X.col(1) +
                  0.7 * rep.dataset.X.col(2) + 0.9 * rep.dataset.X.col(3) +
                  1.1 * rep.dataset.X.col(4);
    for (Index i = 0; i < n; ++i) rep.dataset.X(i, j) = mean[i] + rng.next_normal();
  }
  rep.dataset.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double mu = 4.0 + 2.0 * rep.dataset.X(i, 0) - rep.dataset.X(i, 4) +
                      1.5 * rep.dataset.X(i, 6) + rep.dataset.X(i, 10) +
                      0.5 * rep.dataset.X(i, 12);
    rep.dataset.y[i] = mu + 2.5 * rng.next_normal();
  }
  for (Index j = 0; j < p; ++j) rep.dataset.names.push_back("X" + std::to_string(j + 1));
  rep.true_gamma = ModelSpec::from_included(p, {0, 4, 6, 10, 12});
  return rep;
}

// ---------------------------------------------------------------------------
// Training-size sensitivity
// ---------------------------------------------------------------------------

struct SensitivityRow {
  Index n_star = 0;
  Vector inclusion;
};

/// Posterior inclusion probabilities from full enumeration for each training
/// size on the grid. Sizes below n use a fresh subsample sub-seed; n* = n
/// uses the data design unchanged.
inline std::vector<SensitivityRow> nstar_sensitivity(const Dataset& data,
                                                     const PepConfig& cfg_template,
                                                     const std::vector<Index>& grid,
                                                     const SearchOptions& opt) {
  std::vector<SensitivityRow> rows;
  for (Index ns : grid) {
    PepConfig cfg = cfg_template;
    cfg.n_star = ns;
    if (ns == data.n()) {
      cfg.policy = TrainingPolicy::FullData;
    } else {
      cfg.policy = TrainingPolicy::Subsample;
      cfg.seed = key_combine(mix64(cfg_template.seed), static_cast<std::uint64_t>(ns));
    }
    SearchResult r = enumerate_all(data, cfg, opt);
    rows.push_back({ns, r.inclusion});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Split-half predictive evaluation
// ---------------------------------------------------------------------------

enum class FitMethod { ZPep, JPep, JeffreysDirect };

inline const char* to_string(FitMethod m) {
  switch (m) {
    case FitMethod::ZPep: return "zpep";
    case FitMethod::JPep: return "jpep";
    case FitMethod::JeffreysDirect: return "jeffreys";
  }
  return "?";
}

struct RmseReport {
  std::vector<double> per_partition;
  double mean = 0.0;
  double sd = 0.0;
  std::string model_label;
  std::string method;
  int redrawn_partitions = 0;
};

/// Fit the given model on a random half of the data, score mean-prediction
/// RMSE over the validation half, repeat over random partitions. A modeling
/// half on which the model design is rank-deficient is redrawn.
inline RmseReport split_half_rmse(const Dataset& data, const ModelSpec& model, FitMethod method,
                                  const PepConfig& cfg_template, int partitions, Index T,
                                  std::uint64_t seed) {
  data.validate();
  const Index n = data.n();
  if (n < 4) throw DomainError("split-half evaluation needs n >= 4");
  const Index n_v = (n + 1) / 2;
  const Index n_m = n - n_v;
  const Matrix full_design = build_design(data, model);

  RmseReport report;
  report.model_label = model.label(data.names);
  report.method = to_string(method);
  report.per_partition.reserve(static_cast<std::size_t>(partitions));

  for (int part = 0; part < partitions; ++part) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt >= 100)
        throw RankDeficientError("split-half evaluation: no full-rank modeling half");
      Rng rng = Rng::stream(seed, {tag_hash("rmse-partition"),
                                   static_cast<std::uint64_t>(part), attempt});
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      for (Index i = 0; i < n; ++i) {
        const Index j = i + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      Matrix Xm(n_m, full_design.cols()), Xv(n_v, full_design.cols());
      Vector ym(n_m), yv(n_v);
      for (Index i = 0; i < n_m; ++i) {
        Xm.row(i) = full_design.row(order[static_cast<std::size_t>(i)]);
        ym[i] = data.y[order[static_cast<std::size_t>(i)]];
      }
      for (Index i = 0; i < n_v; ++i) {
        Xv.row(i) = full_design.row(order[static_cast<std::size_t>(n_m + i)]);
        yv[i] = data.y[order[static_cast<std::size_t>(n_m + i)]];
      }

      PosteriorDraws draws;
      try {
        if (method == FitMethod::JeffreysDirect) {
          draws = sample_jeffreys_direct(ym, Xm, T, rng);
        } else {
          PepConfig cfg = cfg_template;
          cfg.baseline = method == FitMethod::ZPep ? Baseline::GPrior : Baseline::Jeffreys;
          cfg.n_star = 0;  // bind to the modeling-half size
          cfg.delta = 0.0;
          cfg.g = 0.0;
          cfg = cfg.resolved(n_m, Xm.cols() - 1);
          TrainingDesign training;
          training.Xstar = Xm;
          training.row_ids.resize(static_cast<std::size_t>(n_m));
          std::iota(training.row_ids.begin(), training.row_ids.end(), Index{0});
          training.gram_chol = chol_lower(Xm.transpose() * Xm, true, "split-half training");
          draws = sample_posterior(ym, Xm, training, cfg, T, rng);
        }
      } catch (const RankDeficientError&) {
        continue;  // redraw this partition
      }
      if (attempt > 0) report.redrawn_partitions += 1;

      const Matrix pred = predict_rows(draws, Xv);  // T x n_v
      const double mse =
          (pred.rowwise() - yv.transpose()).array().square().rowwise().mean().mean();
      report.per_partition.push_back(std::sqrt(mse));
      break;
    }
  }

  const double m = std::accumulate(report.per_partition.begin(), report.per_partition.end(), 0.0) /
                   report.per_partition.size();
  double var = 0.0;
  for (double v : report.per_partition) var += (v - m) * (v - m);
  report.mean = m;
  report.sd = report.per_partition.size() > 1
                  ? std::sqrt(var / (report.per_partition.size() - 1))
                  : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Parsimony comparison across baselines
// ---------------------------------------------------------------------------

struct ParsimonyRow {
  std::uint64_t seed = 0;
  Index dim_zpep = 0;
  Index dim_jpep = 0;
  bool zpep_map_has_core = false;  // Z-PEP MAP contains X1, X7, X11
  double incl_x5_zpep = 0.0;
  double incl_x5_jpep = 0.0;
};

struct ParsimonySummary {
  std::vector<ParsimonyRow> rows;
  double frac_jpep_not_larger = 0.0;
  double frac_zpep_core = 0.0;
  double mean_incl_x5_zpep = 0.0;
  double mean_incl_x5_jpep = 0.0;
};

/// Full enumeration under both baselines on each replicate; reports MAP
/// dimensions and the X5 inclusion probabilities.
inline ParsimonySummary parsimony_comparison(const std::vector<NottKohnReplicate>& replicates,
                                             const SearchOptions& opt) {
  ParsimonySummary s;
  for (const auto& rep : replicates) {
    PepConfig zcfg;
    zcfg.baseline = Baseline::GPrior;
    PepConfig jcfg;
    jcfg.baseline = Baseline::Jeffreys;
    SearchOptions o = opt;
    o.seed = key_combine(mix64(opt.seed), rep.seed);

    SearchResult rz = enumerate_all(rep.dataset, zcfg, o);
    SearchResult rj = enumerate_all(rep.dataset, jcfg, o);
    const ModelSpec mz = map_model(rz);
    const ModelSpec mj = map_model(rj);

    ParsimonyRow row;
    row.seed = rep.seed;
    row.dim_zpep = mz.dim();
    row.dim_jpep = mj.dim();
    row.zpep_map_has_core = mz.includes(0) && mz.includes(6) && mz.includes(10);
    row.incl_x5_zpep = rz.inclusion[4];
    row.incl_x5_jpep = rj.inclusion[4];
    s.rows.push_back(row);
  }
  const double k = static_cast<double>(s.rows.size());
  for (const auto& r : s.rows) {
    s.frac_jpep_not_larger += r.dim_jpep <= r.dim_zpep ? 1.0 : 0.0;
    s.frac_zpep_core += r.zpep_map_has_core ? 1.0 : 0.0;
    s.mean_incl_x5_zpep += r.incl_x5_zpep;
    s.mean_incl_x5_jpep += r.incl_x5_jpep;
  }
  s.frac_jpep_not_larger /= k;
  s.frac_zpep_core /= k;
  s.mean_incl_x5_zpep /= k;
  s.mean_incl_x5_jpep /= k;
  return s;
}

// ---------------------------------------------------------------------------
// Large-n agreement with BIC
// ---------------------------------------------------------------------------

struct ConsistencyRow {
  Index n = 0;
  int replicate = 0;
  double neg2_log_bf = 0.0;
  double delta_bic = 0.0;
  double gap = 0.0;
};

/// Simulate Gaussian data with the given covariate coefficients at each n,
/// compare -2 log BF (quadrature, model vs reference) with the BIC
/// difference. One row per (n, replicate).
inline std::vector<ConsistencyRow> consistency_curve(const std::vector<Index>& n_grid,
                                                     const Vector& beta, double intercept,
                                                     double noise_sd, int replicates,
                                                     std::uint64_t seed) {
  if (replicates < 1) throw DomainError("consistency curve: replicates must be positive");
  const Index p = beta.size();
  std::vector<ConsistencyRow> rows;
  for (Index n : n_grid) {
    if (n <= p + 1) throw DomainError("consistency curve: n must exceed the model dimension");
    for (int rep = 0; rep < replicates; ++rep) {
      Rng rng = Rng::stream(seed, {tag_hash("consistency"), static_cast<std::uint64_t>(n),
                                   static_cast<std::uint64_t>(rep)});
      Matrix X(n, p + 1);
      X.col(0).setOnes();
      rng.fill_normal(X.rightCols(p));
      Vector y = X.col(0) * intercept + X.rightCols(p) * beta;
      for (Index i = 0; i < n; ++i) y[i] += noise_sd * rng.next_normal();

      const SufficientStats fit = ols(y, X);
      const SufficientStats fit0 = ols(y, Matrix::Ones(n, 1));
      ConsistencyRow row;
      row.n = n;
      row.replicate = rep;
      row.neg2_log_bf = -2.0 * jpep_bf_quadrature(fit.rss, fit0.rss, p + 1, 1, n);
      row.delta_bic = bic_delta(fit.rss, p + 1, fit0.rss, 1, n);
      row.gap = std::abs(row.neg2_log_bf - row.delta_bic);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace pep
