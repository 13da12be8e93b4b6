#pragma once

// Stochastic and model-based primal-dual dynamics for the chance-constrained
// reformulation. The regularized Lagrangian is
//   phi(y, lambda, z) = g(y) + sum_j lambda_j (exp(h_j(x + beta.z)/u) - delta)
//                       - nu/2 ||lambda||^2
// which is strongly convex in y (through the cost curvatures) and strongly
// concave in lambda (through nu). B-PD draws one response per iteration;
// MS-PD replaces draws by expectations under a (possibly misspecified) model.

#include <cstddef>
#include <optional>
#include <vector>

#include "flexo/problem.hpp"
#include "flexo/response.hpp"
#include "flexo/rng.hpp"

namespace flexo {

struct ChanceParams {
    double u = 1.5;     // Chernoff temperature
    double delta = 0.2; // risk level
    double nu = 0.01;   // dual regularization

    void validate() const;
};

struct SearchRegion {
    std::vector<double> x_lo, x_hi; // per-user bounds on x
    double beta_lo = 0.0;
    double beta_hi = 1.0;
    double lambda_max = 100.0;

    void validate(std::size_t n) const;
    void project_y(Decision& y) const;
    void project_lambda(std::vector<double>& lambda) const;
};

struct SaddlePoint {
    Decision y;
    std::vector<double> lambda;
};

// Euclidean distance between stacked (x, beta, lambda) vectors.
double saddle_distance(const SaddlePoint& a, const SaddlePoint& b);

struct PhiGrad {
    std::vector<double> gx, gb; // d/dx, d/dbeta
    std::vector<double> glam;   // d/dlambda
};

double phi_value(const FlexProblem& p, const ChanceParams& ch,
                 const SaddlePoint& pt, std::span<const double> z);

// Pointwise gradient at a single response z.
PhiGrad grad_phi(const FlexProblem& p, const ChanceParams& ch,
                 const SaddlePoint& pt, std::span<const double> z);

// Gradient of E_{z ~ D(y)} phi, computed by factorized quadrature (exact
// plug-in for deterministic models).
PhiGrad mean_grad_phi(const FlexProblem& p, const ChanceParams& ch,
                      const ResponseModel& model, const SaddlePoint& pt,
                      std::size_t quad_nodes = 64);

struct TraceRecord {
    std::size_t iter = 0;
    double dist_to_ref = 0.0; // NaN when no reference was supplied
    double objective = 0.0;
    double cv = 0.0;          // NaN when not computed
};

struct IterateTrace {
    std::vector<TraceRecord> records; // length iters + 1
    SaddlePoint final_point;
    std::vector<Decision> window;     // last keep_window decisions, oldest first
};

struct RunOptions {
    double eta = 0.05;
    std::size_t iters = 1000;
    double stop_tol = 0.0;            // MS-PD: stop when step norm <= tol (0 = never)
    std::size_t quad_nodes = 64;
    bool compute_cv = false;          // fill the CV column (exact moment path)
    std::size_t keep_window = 0;      // retain this many trailing decisions
    std::optional<SaddlePoint> start; // default: x_ref projected, beta at lower bound
    const SaddlePoint* reference = nullptr; // distance column target
};

// Stochastic primal-dual: one model draw per iteration, projected steps.
IterateTrace bpd_run(const FlexProblem& p, const ChanceParams& ch,
                     const SearchRegion& region, const ResponseModel& model,
                     const RunOptions& opts, Rng& rng);

// Deterministic model-based primal-dual; bitwise reproducible.
IterateTrace mspd_run(const FlexProblem& p, const ChanceParams& ch,
                      const SearchRegion& region, const ResponseModel& model,
                      const RunOptions& opts);

// Fixed point of the deterministic mean iteration under the supplied model,
// run until the step norm falls below tol. Throws std::runtime_error naming
// the residual when the iteration budget is exhausted.
SaddlePoint compute_reference_equilibrium(const FlexProblem& p, const ChanceParams& ch,
                                          const SearchRegion& region,
                                          const ResponseModel& model, double eta,
                                          double tol = 1e-10,
                                          std::size_t max_iters = 1000000,
                                          std::size_t quad_nodes = 64,
                                          std::optional<SaddlePoint> start = {});

struct StepSizeRange {
    bool valid = false;
    double eta_max = 0.0;
};

// (0, 2(mu - eps L) / (L^2 (1 - eps^2))); empty when eps L / mu >= 1 or eps >= 1.
StepSizeRange step_size_range(double mu, double L, double eps);

struct ConstantsReport {
    double mu = 0.0;
    double L = 0.0;
    double eps = 0.0;   // slope upper bound when available, else sampled
    double sigma = 0.0;
    double B = 0.0;
    double eps_sampled = 0.0;
    double B_support_cap = 0.0; // trivial 2 sqrt(n) bound
    StepSizeRange eta_range;
};

struct ConvergenceBounds {
    bool valid = false;       // rho < 1
    double rho = 0.0;         // sqrt(1 - 2 eta mu + eta^2 L^2) + eta eps L
    double ball_stochastic = 0.0; // eta sigma / (1 - rho)
    double ball_model = 0.0;      // sqrt(2) eta L B / (1 - rho)
};

ConvergenceBounds convergence_bounds(const ConstantsReport& c, double eta);

struct MuLEstimate {
    double mu = 0.0; // analytic curvature floor min(eps_x, min_i w_i eps_beta, nu)
    double L = 0.0;  // sampled supremum of gradient-map difference ratios
};

// L is estimated over sampled pairs in the region (half global, half short
// segments) with a shared z ~ U[-1,1]^n per pair; it is a lower estimate.
MuLEstimate estimate_mu_L(const FlexProblem& p, const ChanceParams& ch,
                          const SearchRegion& region, std::size_t pairs, Rng& rng);

// Windowed average of max_j E[h_j(x + beta.z)] under the model. samples = 0
// uses the exact per-coordinate moment path; otherwise Monte Carlo.
double constraint_violation_metric(const FlexProblem& p,
                                   std::span<const Decision> window,
                                   const ResponseModel& model,
                                   std::size_t samples, Rng& rng,
                                   std::size_t quad_nodes = 64);

} // namespace flexo
