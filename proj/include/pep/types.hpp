#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace pep {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline const char* version() {
#ifdef PEPSEL_VERSION
  return PEPSEL_VERSION;
#else
  return "0.0.0";
#endif
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefiniteError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class AllNegInfError : public Error {
 public:
  using Error::Error;
};

class WrongBaselineError : public Error {
 public:
  using Error::Error;
};

class DegenerateTrainingError : public Error {
 public:
  using Error::Error;
};

class NonpositiveBTildeError : public Error {
 public:
  using Error::Error;
};

class NonpositiveDofError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  using Error::Error;
};

class SpaceTooLargeError : public Error {
 public:
  using Error::Error;
};

class EmptyReductionError : public Error {
 public:
  using Error::Error;
};

class DegenerateSamplerError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Response vector plus the full candidate design matrix (no intercept
/// column; the intercept is implicit and always part of every model).
struct Dataset {
  Vector y;
  Matrix X;
  std::vector<std::string> names;

  Index n() const { return y.size(); }
  Index p() const { return X.cols(); }

  void validate() const {
    if (y.size() < 1) throw DimensionError("dataset: empty response");
    if (X.rows() != y.size())
      throw DimensionError("dataset: X has " + std::to_string(X.rows()) +
                           " rows but y has " + std::to_string(y.size()));
    if (static_cast<Index>(names.size()) != X.cols())
      throw DimensionError("dataset: " + std::to_string(names.size()) +
                           " names for " + std::to_string(X.cols()) +
                           " columns");
    if (!y.allFinite() || !X.allFinite())
      throw DomainError("dataset: non-finite entries");
    std::unordered_set<std::string> seen;
    for (const auto& nm : names)
      if (!seen.insert(nm).second)
        throw DomainError("dataset: duplicate column name '" + nm + "'");
  }
};

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

/// Binary inclusion vector over the p candidate covariates. The intercept is
/// always included and is not a selection candidate, so dim() counts it on
/// top of the selected columns.
class ModelSpec {
 public:
  ModelSpec() = default;

  explicit ModelSpec(std::vector<std::uint8_t> gamma) : gamma_(std::move(gamma)) {
    for (auto& g : gamma_) g = g ? 1 : 0;
  }

  static ModelSpec null_model(Index p) {
    return ModelSpec(std::vector<std::uint8_t>(static_cast<std::size_t>(p), 0));
  }

  static ModelSpec full_model(Index p) {
    return ModelSpec(std::vector<std::uint8_t>(static_cast<std::size_t>(p), 1));
  }

  /// Build from 0-based covariate indices.
  static ModelSpec from_included(Index p, const std::vector<int>& idx) {
    std::vector<std::uint8_t> g(static_cast<std::size_t>(p), 0);
    for (int j : idx) {
      if (j < 0 || j >= p) throw DimensionError("model: covariate index out of range");
      g[static_cast<std::size_t>(j)] = 1;
    }
    return ModelSpec(std::move(g));
  }

  /// Parse from a mask of p '0'/'1' characters.
  static ModelSpec from_mask(const std::string& mask) {
    std::vector<std::uint8_t> g;
    g.reserve(mask.size());
    for (char c : mask) {
      if (c != '0' && c != '1') throw DomainError("model mask must be 0/1 characters");
      g.push_back(c == '1');
    }
    return ModelSpec(std::move(g));
  }

  Index p() const { return static_cast<Index>(gamma_.size()); }

  /// Number of regression coefficients, intercept included.
  Index dim() const {
    return 1 + std::accumulate(gamma_.begin(), gamma_.end(), Index{0},
                               [](Index s, std::uint8_t g) { return s + (g ? 1 : 0); });
  }

  bool includes(Index j) const { return gamma_.at(static_cast<std::size_t>(j)) != 0; }

  std::vector<int> included() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < gamma_.size(); ++j)
      if (gamma_[j]) out.push_back(static_cast<int>(j));
    return out;
  }

  const std::vector<std::uint8_t>& gamma() const { return gamma_; }

  std::string mask() const {
    std::string s(gamma_.size(), '0');
    for (std::size_t j = 0; j < gamma_.size(); ++j)
      if (gamma_[j]) s[j] = '1';
    return s;
  }

  std::string label(const std::vector<std::string>& names) const {
    if (included().empty()) return "(intercept)";
    std::string s;
    for (int j : included()) {
      if (!s.empty()) s += "+";
      s += names.at(static_cast<std::size_t>(j));
    }
    return s;
  }

  /// Stable 64-bit hash of the inclusion pattern, used to key per-model RNG
  /// streams so results are independent of evaluation order.
  std::uint64_t key_hash() const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ (0x100000001b3ULL * gamma_.size());
    for (std::size_t j = 0; j < gamma_.size(); ++j) {
      h ^= gamma_[j] ? (j + 1) * 0xbf58476d1ce4e5b9ULL : (j + 1) * 0x94d049bb133111ebULL;
      h *= 0x2545f4914f6cdd1dULL;
      h ^= h >> 29;
    }
    return h;
  }

  bool operator==(const ModelSpec& o) const { return gamma_ == o.gamma_; }

  /// Ordering used for deterministic tie-breaks: smaller dimension first,
  /// then lexicographic on the inclusion pattern.
  bool dim_lex_less(const ModelSpec& o) const {
    if (dim() != o.dim()) return dim() < o.dim();
    return gamma_ < o.gamma_;
  }

 private:
  std::vector<std::uint8_t> gamma_;
};

struct ModelSpecHash {
  std::size_t operator()(const ModelSpec& m) const {
    return static_cast<std::size_t>(m.key_hash());
  }
};

// ---------------------------------------------------------------------------
// PepConfig
// ---------------------------------------------------------------------------

enum class Baseline { Jeffreys, GPrior };

enum class TrainingPolicy { FullData, Subsample };

/// Prior configuration. Zero-valued numeric fields are resolved against the
/// dataset: n_star <- n, delta <- n_star, g <- delta * n_star.
struct PepConfig {
  Baseline baseline = Baseline::GPrior;
  double delta = 0.0;
  Index n_star = 0;
  double g = 0.0;
  double a = 0.01;
  double b = 0.01;
  TrainingPolicy policy = TrainingPolicy::FullData;
  std::uint64_t seed = 0;

  /// Bind defaults against a dataset of size (n, p) and validate.
  PepConfig resolved(Index n, Index p) const {
    PepConfig c = *this;
    if (c.n_star <= 0) c.n_star = n;
    if (c.n_star < p + 2 || c.n_star > n)
      throw DomainError("n_star=" + std::to_string(c.n_star) +
                        " outside [p+2, n] = [" + std::to_string(p + 2) + ", " +
                        std::to_string(n) + "]");
    if (c.delta <= 0.0) c.delta = static_cast<double>(c.n_star);
    if (c.baseline == Baseline::GPrior && c.g <= 0.0)
      c.g = c.delta * static_cast<double>(c.n_star);
    if (c.n_star == n) c.policy = TrainingPolicy::FullData;
    return c;
  }

  /// True when (a, b) define a proper Inverse-Gamma baseline. The formal
  /// values a = -d/2, b = 0 are accepted on algebraic paths only.
  bool proper_hyper() const { return a > 0.0 && b > 0.0; }
};

inline const char* to_string(Baseline b) {
  return b == Baseline::Jeffreys ? "jpep" : "zpep";
}

}  // namespace pep
