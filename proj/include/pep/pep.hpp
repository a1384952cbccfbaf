#pragma once

// Power-expected-posterior prior variable selection for Gaussian linear
// regression: exact conditional posteriors, Monte-Carlo and quadrature
// marginal likelihoods under the g-prior and Jeffreys baselines, stochastic
// model search, posterior sampling, and simulation harnesses.

#include "pep/csv.hpp"
#include "pep/experiments.hpp"
#include "pep/marginal.hpp"
#include "pep/pep_kernel.hpp"
#include "pep/posterior.hpp"
#include "pep/rng.hpp"
#include "pep/search.hpp"
#include "pep/stat_core.hpp"
#include "pep/types.hpp"
