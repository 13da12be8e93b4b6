#pragma once

// End-to-end workflow: robust solve -> T model-based primal-dual steps warm
// started there -> optional guarding projection back onto the robust feasible
// set -> optional inner rounding -> per-user intervals.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flexo/problem.hpp"
#include "flexo/response.hpp"
#include "flexo/robust.hpp"
#include "flexo/saddle.hpp"

namespace flexo {

struct PipelineConfig {
    std::size_t T = 500;       // MS-PD iteration budget
    bool guard = true;
    bool round = false;
    double resolution = 0.1;   // rounding grid
    double eta = 0.05;
    ChanceParams chance;
    SearchRegion region;
    ResponseModel model_ms;
    std::size_t quad_nodes = 64;
    SolveSettings solver;
    const SaddlePoint* reference = nullptr; // optional distance target for the trace

    void validate() const;
};

struct UserInterval {
    std::size_t user = 0;
    double center = 0.0;
    double radius = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

struct FlexibleAssignment {
    Decision decision;
    std::vector<std::string> stages_run;
    double cv_estimate = 0.0; // under the misspecified model (NaN if unavailable)
    std::optional<RobustCertificate> certificate; // present when guarded

    // Stage outputs retained for inspection.
    SolveReport robust_stage;
    SaddlePoint after_mspd;
    std::optional<SolveReport> guard_stage;
};

struct PipelineResult {
    FlexibleAssignment assignment;
    IterateTrace trace; // MS-PD stage trace
};

PipelineResult run_flexo(const FlexProblem& p, const PipelineConfig& cfg);

std::vector<UserInterval> emit_user_sets(const FlexibleAssignment& a);

} // namespace flexo
