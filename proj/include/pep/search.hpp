#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pep/marginal.hpp"
#include "pep/rng.hpp"
#include "pep/types.hpp"

namespace pep {

struct SearchOptions {
  MarginalMethod method = MarginalMethod::Auto;
  Index mc_iterations = 1000;  // Monte-Carlo draws per marginal estimate
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Mc3Step {
  int flip = -1;
  bool accepted = false;
};

struct SearchResult {
  std::vector<ModelSpec> models;
  std::vector<LogMarginalEstimate> estimates;
  std::vector<double> probs;
  std::vector<std::int64_t> visit_counts;
  Vector inclusion;  // length p
  std::vector<Mc3Step> trace;

  std::size_t size() const { return models.size(); }

  const ModelSpec& top_model() const {
    return models.at(static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin()));
  }

  /// Indices sorted by decreasing posterior probability (deterministic
  /// tie-break: smaller dimension, then lexicographic inclusion pattern).
  std::vector<std::size_t> ranking() const {
    std::vector<std::size_t> idx(models.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (probs[a] != probs[b]) return probs[a] > probs[b];
      return models[a].dim_lex_less(models[b]);
    });
    return idx;
  }
};

namespace detail {

inline void finalize_result(SearchResult& r, Index p) {
  r.probs = posterior_model_probs(r.estimates, r.models);
  r.inclusion = Vector::Zero(p);
  for (std::size_t i = 0; i < r.models.size(); ++i)
    for (int j : r.models[i].included()) r.inclusion[j] += r.probs[i];
  r.inclusion = r.inclusion.cwiseMin(1.0).cwiseMax(0.0);
}

inline LogMarginalEstimate estimate_named(const MarginalEstimator& est, const ModelSpec& m,
                                          const Dataset& data) {
  try {
    return est.estimate(m);
  } catch (const Error& e) {
    throw Error("model " + m.label(data.names) + ": " + e.what());
  }
}

}  // namespace detail

/// Evaluate every one of the 2^p models once. Estimation is spread across
/// opt.threads workers; per-model RNG streams keep the result identical for
/// any thread count.
inline SearchResult enumerate_all(const Dataset& data, const PepConfig& cfg,
                                  const SearchOptions& opt) {
  data.validate();
  const Index p = data.p();
  if (p > 25) throw SpaceTooLargeError("enumeration over 2^p models needs p <= 25");
  const std::size_t count = std::size_t{1} << p;

  MarginalEstimator est(data, cfg, {opt.method, opt.mc_iterations, opt.seed});
  SearchResult r;
  r.models.reserve(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    std::vector<std::uint8_t> gamma(static_cast<std::size_t>(p), 0);
    for (Index j = 0; j < p; ++j)
      if (mask & (std::size_t{1} << j)) gamma[static_cast<std::size_t>(j)] = 1;
    r.models.emplace_back(std::move(gamma));
  }
  r.estimates.resize(count);
  r.visit_counts.assign(count, 1);

  const int workers = std::max(1, opt.threads);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex err_mu;
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load(std::memory_order_relaxed)) break;
      try {
        r.estimates[i] = detail::estimate_named(est, r.models[i], data);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!failed.exchange(true)) first_error = e.what();
        break;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failed) throw Error(first_error);

  detail::finalize_result(r, p);
  return r;
}

/// Metropolis search over inclusion vectors: propose flipping one uniformly
/// chosen indicator, accept with min(1, exp(delta log marginal)) under the
/// uniform model prior. Each model's marginal is estimated once and frozen,
/// so the chain targets a fixed surface; reported probabilities come from
/// the renormalized marginal weights of the visited models, not from visit
/// frequencies.
inline SearchResult mc3_search(const Dataset& data, const PepConfig& cfg, const SearchOptions& opt,
                               Index iterations) {
  data.validate();
  const Index p = data.p();
  if (p < 1) throw DomainError("mc3 needs at least one candidate covariate");

  MarginalEstimator est(data, cfg, {opt.method, opt.mc_iterations, opt.seed});
  SearchResult r;
  std::unordered_map<ModelSpec, std::size_t, ModelSpecHash> index;

  auto lookup = [&](const ModelSpec& m) -> std::size_t {
    auto it = index.find(m);
    if (it != index.end()) return it->second;
    const std::size_t i = r.models.size();
    r.models.push_back(m);
    r.estimates.push_back(detail::estimate_named(est, m, data));
    r.visit_counts.push_back(0);
    index.emplace(m, i);
    return i;
  };

  Rng chain = Rng::stream(opt.seed, {tag_hash("mc3-chain")});
  ModelSpec current = ModelSpec::null_model(p);
  std::size_t cur_idx = lookup(current);
  r.visit_counts[cur_idx] += 1;
  r.trace.reserve(static_cast<std::size_t>(iterations));

  for (Index it = 0; it < iterations; ++it) {
    const int j = static_cast<int>(chain.next_below(static_cast<std::uint64_t>(p)));
    auto gamma = current.gamma();
    gamma[static_cast<std::size_t>(j)] ^= 1;
    ModelSpec proposed(std::move(gamma));
    const std::size_t prop_idx = lookup(proposed);
    const double diff = r.estimates[prop_idx].log_value - r.estimates[cur_idx].log_value;
    const bool accept = diff >= 0.0 || std::log(chain.next_double_pos()) < diff;
    if (accept) {
      current = std::move(proposed);
      cur_idx = prop_idx;
    }
    r.trace.push_back({j, accept});
    r.visit_counts[cur_idx] += 1;
  }

  detail::finalize_result(r, p);
  return r;
}

struct TwoStepResult {
  SearchResult full_space;
  std::vector<int> kept;  // covariate indices surviving the threshold
  Dataset reduced_data;
  SearchResult reduced_space;
};

/// Two-step reduction: MC3 on the full space, keep covariates with marginal
/// inclusion above the threshold, then MC3 on the reduced space.
inline TwoStepResult two_step_search(const Dataset& data, const PepConfig& cfg,
                                     const SearchOptions& opt, Index iters1, Index iters2,
                                     double threshold = 0.3) {
  if (!(threshold >= 0.0) || !(threshold <= 1.0))
    throw DomainError("two-step threshold must lie in [0, 1]");
  TwoStepResult out;
  out.full_space = mc3_search(data, cfg, opt, iters1);
  for (Index j = 0; j < data.p(); ++j)
    if (out.full_space.inclusion[j] > threshold) out.kept.push_back(static_cast<int>(j));
  if (out.kept.empty())
    throw EmptyReductionError("two-step search: no covariate passed the inclusion threshold");

  out.reduced_data.y = data.y;
  out.reduced_data.X.resize(data.n(), static_cast<Index>(out.kept.size()));
  for (std::size_t k = 0; k < out.kept.size(); ++k) {
    out.reduced_data.X.col(static_cast<Index>(k)) = data.X.col(out.kept[k]);
    out.reduced_data.names.push_back(data.names[static_cast<std::size_t>(out.kept[k])]);
  }
  out.reduced_space = mc3_search(out.reduced_data, cfg, opt, iters2);
  return out;
}

/// Maximum a-posteriori model; ties broken toward the smaller dimension,
/// then lexicographic inclusion pattern.
inline ModelSpec map_model(const SearchResult& r) {
  if (r.models.empty()) throw DomainError("map_model: empty search result");
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.models.size(); ++i) {
    if (r.probs[i] > r.probs[best] ||
        (r.probs[i] == r.probs[best] && r.models[i].dim_lex_less(r.models[best])))
      best = i;
  }
  return r.models[best];
}

/// Model containing exactly the covariates with inclusion probability > 0.5.
inline ModelSpec median_probability_model(const SearchResult& r) {
  if (r.models.empty()) throw DomainError("median_probability_model: empty search result");
  const Index p = r.inclusion.size();
  std::vector<std::uint8_t> gamma(static_cast<std::size_t>(p), 0);
  for (Index j = 0; j < p; ++j)
    if (r.inclusion[j] > 0.5) gamma[static_cast<std::size_t>(j)] = 1;
  return ModelSpec(std::move(gamma));
}

}  // namespace pep
