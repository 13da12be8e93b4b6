#pragma once

// Empirical estimators for the constants the convergence theory consumes:
// the distribution-map Lipschitz constant (sampled plus a closed-form slope
// bound), the stochastic gradient deviation sigma, and the model
// misspecification bound B via a shared-noise coupling.

#include <cstddef>

#include "flexo/response.hpp"
#include "flexo/saddle.hpp"

namespace flexo {

struct EpsEstimate {
    double sampled = 0.0;     // lower estimate from sampled decision pairs
    double slope_bound = 0.0; // per-user gradient-norm bound, valid upper bound
};

// Wasserstein-1 Lipschitz constant of y -> D(y): the shared-noise coupling
// gives W1(D(y), D(y')) <= ||Psi(y) - Psi(y')||, so shift slopes bound it.
EpsEstimate estimate_lipschitz_eps(const ResponseModel& model,
                                   const SearchRegion& region,
                                   std::size_t pair_count, Rng& rng);

// sqrt(2) times the largest per-block mean deviation of stochastic gradients
// from their mean, over sampled (y, lambda).
double estimate_sigma(const FlexProblem& p, const ChanceParams& ch,
                      const ResponseModel& model, const SearchRegion& region,
                      std::size_t points, std::size_t draws, Rng& rng);

struct BEstimate {
    double coupling = 0.0;    // max_y E||z_true - z_ms|| under shared noise
    double support_cap = 0.0; // 2 sqrt(n) from the [-1,1]^n support
};

BEstimate estimate_misspecification_bound(const ResponseModel& true_model,
                                          const ResponseModel& ms_model,
                                          const SearchRegion& region,
                                          std::size_t points, std::size_t draws,
                                          Rng& rng);

} // namespace flexo
