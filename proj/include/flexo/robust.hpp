#pragma once

// Convex worst-case reformulation of the hyperbox-robust problem and a
// first-order projected primal-dual solver for it. The reformulation carries
// envelope variables s (per-user worst-case deviation magnitudes) and
// auxiliary t (absolute deviations |x - x_ref|), so every constraint is
// either affine or the single quadratic ||s||^2 <= gamma. For this constraint
// family the envelopes are tight: the projected (x, beta) feasible set equals
// the exact robust feasible set.

#include <cstddef>
#include <limits>

#include "flexo/problem.hpp"

namespace flexo {

struct ReformulatedProgram {
    FlexProblem problem;

    // When set, the objective is 1/2 ||y - y_target||^2 (guarding projection)
    // instead of the problem cost.
    bool proximity = false;
    Decision y_target;

    std::size_t users() const { return problem.n; }
    // x, beta, s
    std::size_t decision_var_count() const { return 3 * problem.n; }
    // t_i >= |x_i - x_ref_i|
    std::size_t aux_var_count() const { return problem.n; }
    // ball envelope + s/t linking rows + robust affine rows
    std::size_t constraint_count() const {
        return 1 + 3 * problem.n + problem.affine_rows();
    }
};

struct SolveSettings {
    std::size_t max_iters = 200000; // total inner gradient steps
    double tol = 1e-6;              // KKT residual target
    double rho = 10.0;              // initial augmentation weight
    double lambda_cap = 1e3;        // multiplier clipping bound
    double feas_tol = 1e-6;         // vertex-oracle tolerance for the polished output
    // upper bound on each beta_i; infinity leaves the program uncapped.
    // Scenario-driven runs keep the whole workflow inside one beta box, so
    // their robust stage honors the same cap.
    double beta_cap = std::numeric_limits<double>::infinity();
};

struct SolveReport {
    Decision decision;
    double objective_value = 0.0;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

ReformulatedProgram build_reformulation(const FlexProblem& p);

// First-order primal-dual solve: accelerated projected gradient descent on
// the variables against clipped multiplier ascent (augmented Lagrangian
// outer steps), followed by a feasibility polish (uniform beta shrink found
// by bisection). The returned decision passes the vertex oracle at
// settings.feas_tol whenever the nominal x is robust-feasible on its own.
SolveReport solve_reformulation(const ReformulatedProgram& prog,
                                const SolveSettings& settings = {});

// min 1/2 ||y - y_T||^2 over the robust feasible set; same solver contract.
SolveReport guard_project(const FlexProblem& p, const Decision& y_T,
                          const SolveSettings& settings = {});

// Floors each beta_i to the resolution grid; x is left untouched. Rounding
// down shrinks the hyperbox, so feasibility is preserved.
Decision inner_round(const Decision& d, double resolution);

} // namespace flexo
