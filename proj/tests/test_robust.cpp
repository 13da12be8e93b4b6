#include <doctest.h>

#include <cmath>

#include "flexo/kernels.hpp"
#include "flexo/robust.hpp"
#include "test_support.hpp"

using namespace flexo;

namespace {

FlexProblem tiny_problem() {
    FlexProblem p;
    p.n = 1;
    p.epsilon_x = 0.001;
    p.epsilon_beta = 0.01;
    p.weights = {1.0};
    p.x_ref = {20.0};
    p.gamma = 4.0;
    return p;
}

} // namespace

TEST_CASE("reformulation reports the expected variable structure") {
    auto p = tiny_problem();
    const auto prog = build_reformulation(p);
    CHECK(prog.decision_var_count() == 3);
    CHECK(prog.aux_var_count() == 1);
    CHECK(prog.constraint_count() == 4); // ball envelope + link + two abs rows

    Rng rng(5);
    auto q = testing::random_problem(3, rng, 0); // c = 0: envelope rows only
    const auto prog2 = build_reformulation(q);
    CHECK(prog2.constraint_count() == 1 + 3 * 3);

    auto r = testing::random_problem(7, rng, 6);
    const auto prog3 = build_reformulation(r);
    CHECK(prog3.constraint_count() == 1 + 3 * 7 + 6);
}

TEST_CASE("tiny robust solve reaches the analytic optimum") {
    const auto p = tiny_problem();
    const auto rep = solve_reformulation(build_reformulation(p));
    CHECK(rep.converged);
    CHECK(rep.decision.x[0] == doctest::Approx(20.0).epsilon(1e-3));
    CHECK(rep.decision.beta[0] == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(vertex_feasibility_oracle(p, rep.decision, 1e-6).feasible);
}

TEST_CASE("collapsing the ball removes all flexibility") {
    auto p = tiny_problem();
    p.gamma = 1e-6;
    const auto rep = solve_reformulation(build_reformulation(p));
    CHECK(std::abs(rep.decision.x[0] - 20.0) < 1e-2);
    CHECK(rep.decision.beta[0] < 2e-3);
}

TEST_CASE("zero weights zero out the flexibility radii") {
    auto p = tiny_problem();
    p.weights = {0.0};
    const auto rep = solve_reformulation(build_reformulation(p));
    CHECK(rep.decision.beta[0] < 1e-4);
}

TEST_CASE("solver output is robust-feasible and near grid optimal") {
    Rng rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t n = 2 + std::size_t(rng.uniform(0.0, 6.99));
        auto p = testing::random_problem(n, rng);
        const auto rep = solve_reformulation(build_reformulation(p));
        CHECK(vertex_feasibility_oracle(p, rep.decision, 1e-6).feasible);

        // no sampled robust-feasible point may beat the solver objective
        double best = std::numeric_limits<double>::infinity();
        for (int s = 0; s < 4000; ++s) {
            auto d = testing::random_decision(p, rng, std::sqrt(p.gamma), std::sqrt(p.gamma));
            if (worst_case_margin(p, d) > 0.0) continue;
            best = std::min(best, eval_objective(p, d));
        }
        CHECK(rep.objective_value <= best + 1e-4);
    }
}

TEST_CASE("guarding projection is idempotent and non-expansive") {
    const auto p = tiny_problem();

    // hand geometry: only beta exceeds the envelope
    const auto rep = guard_project(p, Decision{{20.0}, {3.0}});
    CHECK(rep.decision.x[0] == doctest::Approx(20.0).epsilon(1e-3));
    CHECK(rep.decision.beta[0] == doctest::Approx(2.0).epsilon(1e-3));

    // projecting a feasible point moves nowhere
    const Decision inside{{20.0}, {1.0}};
    const auto rep2 = guard_project(p, inside);
    CHECK(rep2.decision.x[0] == doctest::Approx(20.0).epsilon(1e-4));
    CHECK(rep2.decision.beta[0] == doctest::Approx(1.0).epsilon(1e-3));

    Rng rng(41);
    auto q = testing::random_problem(3, rng);
    for (int trial = 0; trial < 5; ++trial) {
        const auto a = testing::random_decision(q, rng, 3.0, 2.0);
        const auto b = testing::random_decision(q, rng, 3.0, 2.0);
        const auto pa = guard_project(q, a).decision;
        const auto pb = guard_project(q, b).decision;
        CHECK(vertex_feasibility_oracle(q, pa, 1e-6).feasible);
        const double before = std::sqrt(kern::sumsq_diff(a.x, b.x) +
                                        kern::sumsq_diff(a.beta, b.beta));
        const double after = std::sqrt(kern::sumsq_diff(pa.x, pb.x) +
                                       kern::sumsq_diff(pa.beta, pb.beta));
        CHECK(after <= before + 1e-3);
    }
}

TEST_CASE("inner rounding floors beta to the grid") {
    Decision d{{19.0}, {0.47}};
    CHECK(inner_round(d, 0.1).beta[0] == doctest::Approx(0.4));
    Decision on_grid{{19.0}, {1.0}};
    CHECK(inner_round(on_grid, 0.1).beta[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(inner_round(d, 0.0), std::invalid_argument);

    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = testing::random_problem(4, rng);
        auto dec = testing::random_decision(p, rng, 0.4, 0.8);
        if (!vertex_feasibility_oracle(p, dec, 1e-9).feasible) continue;
        const auto rounded = inner_round(dec, 0.1);
        for (std::size_t i = 0; i < p.n; ++i) CHECK(rounded.beta[i] <= dec.beta[i] + 1e-12);
        CHECK(vertex_feasibility_oracle(p, rounded, 1e-9).feasible);
    }
}
