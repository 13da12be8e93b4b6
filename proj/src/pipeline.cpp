#include "flexo/pipeline.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace flexo {

void PipelineConfig::validate() const {
    chance.validate();
    if (round && resolution <= 0.0)
        throw std::invalid_argument("pipeline: rounding needs a positive resolution");
    if (eta <= 0.0) throw std::invalid_argument("pipeline: eta must be positive");
}

PipelineResult run_flexo(const FlexProblem& p, const PipelineConfig& cfg) {
    p.validate();
    cfg.validate();
    cfg.region.validate(p.n);
    if (cfg.model_ms.users() != p.n)
        throw std::invalid_argument("pipeline: model size mismatch");

    PipelineResult res;
    auto& a = res.assignment;

    // 1. robust warm start, capped at the working beta box
    SolveSettings solver = cfg.solver;
    solver.beta_cap = std::min(solver.beta_cap, cfg.region.beta_hi);
    const auto prog = build_reformulation(p);
    a.robust_stage = solve_reformulation(prog, solver);
    if (!a.robust_stage.converged)
        a.stages_run.push_back("robust (not converged, polished)");
    else
        a.stages_run.push_back("robust");
    Decision current = a.robust_stage.decision;

    // 2. T steps of MS-PD from the robust point
    if (cfg.T > 0) {
        RunOptions opts;
        opts.eta = cfg.eta;
        opts.iters = cfg.T;
        opts.quad_nodes = cfg.quad_nodes;
        opts.compute_cv = true;
        opts.reference = cfg.reference;
        SaddlePoint start;
        start.y = current;
        start.lambda.assign(p.constraint_count(), 0.0);
        opts.start = start;
        res.trace = mspd_run(p, cfg.chance, cfg.region, cfg.model_ms, opts);
        current = res.trace.final_point.y;
        a.after_mspd = res.trace.final_point;
        a.stages_run.push_back("mspd(T=" + std::to_string(cfg.T) + ")");
    } else {
        a.after_mspd.y = current;
        a.after_mspd.lambda.assign(p.constraint_count(), 0.0);
    }

    // 3. guarding projection
    if (cfg.guard) {
        a.guard_stage = guard_project(p, current, solver);
        current = a.guard_stage->decision;
        a.stages_run.push_back("guard");
    }

    // 4. inner rounding
    if (cfg.round) {
        current = inner_round(current, cfg.resolution);
        a.stages_run.push_back("round");
    }

    a.decision = current;
    if (cfg.guard) {
        a.certificate = vertex_feasibility_oracle(p, current, cfg.solver.feas_tol);
    }

    // Final constraint-violation estimate under the model actually available.
    std::array<Decision, 1> window{current};
    Rng cv_rng(0);
    a.cv_estimate = constraint_violation_metric(p, window, cfg.model_ms, 0, cv_rng,
                                                cfg.quad_nodes);
    return res;
}

std::vector<UserInterval> emit_user_sets(const FlexibleAssignment& a) {
    std::vector<UserInterval> out;
    out.reserve(a.decision.size());
    for (std::size_t i = 0; i < a.decision.size(); ++i) {
        UserInterval u;
        u.user = i;
        u.center = a.decision.x[i];
        u.radius = a.decision.beta[i];
        u.lo = u.center - u.radius;
        u.hi = u.center + u.radius;
        out.push_back(u);
    }
    return out;
}

} // namespace flexo
