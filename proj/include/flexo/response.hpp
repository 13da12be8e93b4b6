#pragma once

// Decision-dependent response models: each user i draws
//   z_i = clamp(Psi_i(x_i, beta_i) + xi_i, -1, 1)
// with an additive per-user shift rule Psi_i and optional Gaussian noise.
// Clamping produces atoms at the interval ends; the expectation engines
// integrate the interior density exactly against those atoms, either by
// per-coordinate Gauss-Legendre quadrature (the laws are independent across
// users, so product expectations factorize) or by Monte Carlo.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flexo/problem.hpp"
#include "flexo/rng.hpp"

namespace flexo {

enum class ShiftKind {
    constant,      // Psi = level
    affine,        // Psi = level + slope_x (x - x0) + slope_beta (beta - b0)
    band_reaction, // Psi = gain * beta * (band_lo - x) below the band,
                   //       -gain * beta * (x - band_hi) above it, 0 inside
    linear_pull,   // Psi = -gain * beta * (x - center)
};

struct ShiftRule {
    ShiftKind kind = ShiftKind::constant;
    double level = 0.0;
    double slope_x = 0.0;
    double slope_beta = 0.0;
    double x0 = 0.0;
    double b0 = 0.0;
    double band_lo = 19.0;
    double band_hi = 20.5;
    double center = 19.75;
    double gain = 1.0;

    double shift(double x, double beta) const;

    // Componentwise bounds on |dPsi/dx| and |dPsi/dbeta| over a box.
    void slope_bounds(double x_lo, double x_hi, double beta_lo, double beta_hi,
                      double& dx, double& dbeta) const;
};

struct ResponseModel {
    std::vector<ShiftRule> rules; // one per user
    double noise_sd = 0.0;        // Gaussian noise scale, 0 = deterministic

    std::size_t users() const { return rules.size(); }
    bool deterministic() const { return noise_sd == 0.0; }
};

// Comfort-band reaction: users push back when sent below band_lo or above
// band_hi, proportionally to their allowed radius.
ResponseModel make_band_reaction_model(std::size_t n, double noise_sd,
                                       double band_lo = 19.0, double band_hi = 20.5,
                                       double gain = 1.0);
// The paper-style misspecified model: deterministic linear pull to a center.
ResponseModel make_linear_pull_model(std::size_t n, double center = 19.75,
                                     double gain = 1.0);

std::vector<double> shift_vector(const ResponseModel& m, const Decision& d);

// One draw of z ~ D(y); always inside [-1,1]^n.
std::vector<double> sample_response(const ResponseModel& m, const Decision& d,
                                    Rng& rng);

// Law of a single clamped coordinate, evaluated on a fixed quadrature grid so
// that many integrands can reuse one grid. For deterministic laws the grid
// degenerates to the single plug-in point with weight 1.
struct CoordinateLaw {
    double shift = 0.0;
    double sd = 0.0;
    double mass_lo = 0.0;              // atom at -1
    double mass_hi = 0.0;              // atom at +1
    std::vector<double> nodes;         // interior z values (or the plug-in point)
    std::vector<double> weights;       // density-weighted quadrature weights

    // E[f(z)] against this law.
    double expect(const std::function<double(double)>& f) const;
    double mean() const;
    double second_moment() const;
};

CoordinateLaw make_coordinate_law(double shift, double sd, std::size_t quad_nodes);

// All per-user laws of D(y) at a decision.
std::vector<CoordinateLaw> coordinate_laws(const ResponseModel& m, const Decision& d,
                                           std::size_t quad_nodes);

struct ExpectationRequest {
    std::size_t constraint = 0; // 0 = ball, 1.. = affine rows
    double u = 1.0;             // Chernoff temperature, > 0
    enum class Method { monte_carlo, quadrature } method = Method::quadrature;
    std::size_t samples = 10000;   // Monte Carlo sample count
    std::uint64_t seed = 0;        // Monte Carlo stream seed
    std::size_t quad_nodes = 64;
};

// E_{z ~ D(y)}[exp(h_j(x + beta.z)/u)]
double expect_exp_constraint(const FlexProblem& p, const ResponseModel& m,
                             const Decision& d, const ExpectationRequest& req);

// Per-constraint expectations needed by the model-based primal-dual method:
//   value  = E[exp(h_j(v)/u)]
//   gx[i]  = E[exp(h_j(v)/u) * dh_j/dv_i]
//   gb[i]  = E[exp(h_j(v)/u) * dh_j/dv_i * z_i]
struct ConstraintMeanTerms {
    double value = 0.0;
    std::vector<double> gx;
    std::vector<double> gb;
};

ConstraintMeanTerms constraint_mean_terms(const FlexProblem& p,
                                          std::span<const CoordinateLaw> laws,
                                          const Decision& d, std::size_t j, double u);

} // namespace flexo
