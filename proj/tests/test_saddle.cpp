#include <doctest.h>

#include <cmath>

#include "flexo/estimators.hpp"
#include "flexo/saddle.hpp"
#include "test_support.hpp"

using namespace flexo;

namespace {

SaddlePoint random_point(const FlexProblem& p, const SearchRegion& region, Rng& rng) {
    SaddlePoint pt;
    pt.y.x.resize(p.n);
    pt.y.beta.resize(p.n);
    pt.lambda.resize(p.constraint_count());
    for (std::size_t i = 0; i < p.n; ++i) {
        pt.y.x[i] = rng.uniform(region.x_lo[i], region.x_hi[i]);
        pt.y.beta[i] = rng.uniform(region.beta_lo, region.beta_hi);
    }
    for (double& l : pt.lambda) l = rng.uniform(0.0, region.lambda_max);
    return pt;
}

SearchRegion region_around(const FlexProblem& p, double x_margin, double beta_hi,
                           double lambda_max) {
    SearchRegion r;
    r.x_lo.resize(p.n);
    r.x_hi.resize(p.n);
    for (std::size_t i = 0; i < p.n; ++i) {
        r.x_lo[i] = p.x_ref[i] - x_margin;
        r.x_hi[i] = p.x_ref[i] + x_margin;
    }
    r.beta_hi = beta_hi;
    r.lambda_max = lambda_max;
    return r;
}

// Straight-line re-evaluation of phi, coded independently of the library.
double phi_by_hand(const FlexProblem& p, const ChanceParams& ch, const SaddlePoint& pt,
                   const std::vector<double>& z) {
    double g = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) {
        g += 0.5 * p.epsilon_x * pt.y.x[i] * pt.y.x[i];
        g += p.weights[i] *
             (-pt.y.beta[i] + 0.5 * p.epsilon_beta * pt.y.beta[i] * pt.y.beta[i]);
    }
    std::vector<double> v(p.n);
    for (std::size_t i = 0; i < p.n; ++i) v[i] = pt.y.x[i] + pt.y.beta[i] * z[i];
    double ball = -p.gamma;
    for (std::size_t i = 0; i < p.n; ++i)
        ball += (v[i] - p.x_ref[i]) * (v[i] - p.x_ref[i]);
    double acc = g + pt.lambda[0] * (std::exp(ball / ch.u) - ch.delta);
    for (std::size_t j = 0; j < p.affine_rows(); ++j) {
        double h = -p.e[j];
        for (std::size_t i = 0; i < p.n; ++i) h += p.D[j * p.n + i] * v[i];
        acc += pt.lambda[1 + j] * (std::exp(h / ch.u) - ch.delta);
    }
    for (double l : pt.lambda) acc -= 0.5 * ch.nu * l * l;
    return acc;
}

} // namespace

TEST_CASE("phi value: trivial and random cases") {
    Rng rng(71);
    auto p = testing::random_problem(3, rng);
    ChanceParams ch{1.5, 0.2, 0.0};

    SaddlePoint pt;
    pt.y = testing::random_decision(p, rng, 0.5, 0.5);
    pt.lambda.assign(p.constraint_count(), 0.0);
    std::vector<double> z = {0.1, -0.4, 0.9};
    CHECK(phi_value(p, ch, pt, z) == doctest::Approx(eval_objective(p, pt.y)));

    // single constraint with h = 0: contributes 1 - delta
    FlexProblem q;
    q.n = 1;
    q.epsilon_x = 0.1;
    q.epsilon_beta = 0.1;
    q.weights = {1.0};
    q.x_ref = {0.0};
    q.gamma = 1e-12;
    SaddlePoint qt;
    qt.y = Decision{{0.0}, {0.0}};
    qt.lambda = {1.0};
    std::vector<double> z1 = {0.0};
    CHECK(phi_value(q, ch, qt, z1) ==
          doctest::Approx(eval_objective(q, qt.y) + 0.8).epsilon(1e-9));

    ChanceParams reg{1.5, 0.2, 0.01};
    for (int trial = 0; trial < 20; ++trial) {
        auto rp = testing::random_problem(4, rng);
        SaddlePoint rpt;
        rpt.y = testing::random_decision(rp, rng, 0.8, 0.8);
        rpt.lambda.resize(rp.constraint_count());
        for (double& l : rpt.lambda) l = rng.uniform(0.0, 3.0);
        std::vector<double> rz(rp.n);
        for (double& v : rz) v = rng.uniform(-1.0, 1.0);
        CHECK(phi_value(rp, reg, rpt, rz) ==
              doctest::Approx(phi_by_hand(rp, reg, rpt, rz)).epsilon(1e-12));
    }
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(73);
    ChanceParams ch{1.5, 0.2, 0.01};
    const double fd_step = 1e-6;
    for (int trial = 0; trial < 25; ++trial) {
        auto p = testing::random_problem(3, rng);
        SaddlePoint pt;
        pt.y = testing::random_decision(p, rng, 0.6, 0.8);
        pt.lambda.resize(p.constraint_count());
        for (double& l : pt.lambda) l = rng.uniform(0.0, 2.0);
        std::vector<double> z(p.n);
        for (double& v : z) v = rng.uniform(-1.0, 1.0);

        const auto g = grad_phi(p, ch, pt, z);
        auto check_fd = [&](double got, double* slot) {
            const double save = *slot;
            *slot = save + fd_step;
            const double up = phi_value(p, ch, pt, z);
            *slot = save - fd_step;
            const double dn = phi_value(p, ch, pt, z);
            *slot = save;
            const double fd = (up - dn) / (2.0 * fd_step);
            const double scale = std::max({1.0, std::abs(fd), std::abs(got)});
            CHECK(std::abs(got - fd) / scale <= 1e-4);
        };
        for (std::size_t i = 0; i < p.n; ++i) {
            check_fd(g.gx[i], &pt.y.x[i]);
            check_fd(g.gb[i], &pt.y.beta[i]);
        }
        for (std::size_t j = 0; j < pt.lambda.size(); ++j)
            check_fd(g.glam[j], &pt.lambda[j]);

        // lambda = 0 leaves only the cost gradient in the y blocks
        SaddlePoint free = pt;
        free.lambda.assign(pt.lambda.size(), 0.0);
        const auto g0 = grad_phi(p, ch, free, z);
        for (std::size_t i = 0; i < p.n; ++i) {
            CHECK(g0.gx[i] == doctest::Approx(p.epsilon_x * pt.y.x[i]));
            CHECK(g0.gb[i] == doctest::Approx(
                                  p.weights[i] * (-1.0 + p.epsilon_beta * pt.y.beta[i])));
        }
    }
}

TEST_CASE("mean gradient reduces to plug-in for deterministic models") {
    const auto ci = testing::conditioned_instance();
    Rng rng(79);
    SaddlePoint pt = random_point(ci.problem, ci.region, rng);
    const auto mean_g = mean_grad_phi(ci.problem, ci.chance, ci.fixed_model, pt);
    const auto z = shift_vector(ci.fixed_model, pt.y); // inside [-1,1] already
    const auto plug_g = grad_phi(ci.problem, ci.chance, pt, z);
    for (std::size_t i = 0; i < ci.problem.n; ++i) {
        CHECK(mean_g.gx[i] == doctest::Approx(plug_g.gx[i]).epsilon(1e-12));
        CHECK(mean_g.gb[i] == doctest::Approx(plug_g.gb[i]).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < plug_g.glam.size(); ++j)
        CHECK(mean_g.glam[j] == doctest::Approx(plug_g.glam[j]).epsilon(1e-12));
}

TEST_CASE("mean gradient matches averaged stochastic gradients") {
    const auto ci = testing::conditioned_instance();
    Rng rng(83);
    SaddlePoint pt = random_point(ci.problem, ci.region, rng);
    const auto mean_g = mean_grad_phi(ci.problem, ci.chance, ci.true_model, pt);

    const std::size_t M = 400000;
    PhiGrad acc;
    acc.gx.assign(ci.problem.n, 0.0);
    acc.gb.assign(ci.problem.n, 0.0);
    acc.glam.assign(ci.problem.constraint_count(), 0.0);
    for (std::size_t s = 0; s < M; ++s) {
        const auto z = sample_response(ci.true_model, pt.y, rng);
        const auto g = grad_phi(ci.problem, ci.chance, pt, z);
        for (std::size_t i = 0; i < acc.gx.size(); ++i) {
            acc.gx[i] += g.gx[i];
            acc.gb[i] += g.gb[i];
        }
        for (std::size_t j = 0; j < acc.glam.size(); ++j) acc.glam[j] += g.glam[j];
    }
    for (std::size_t i = 0; i < acc.gx.size(); ++i) {
        CHECK(mean_g.gx[i] == doctest::Approx(acc.gx[i] / double(M)).epsilon(0.01));
        CHECK(mean_g.gb[i] == doctest::Approx(acc.gb[i] / double(M)).epsilon(0.01));
    }
    for (std::size_t j = 0; j < acc.glam.size(); ++j)
        CHECK(mean_g.glam[j] == doctest::Approx(acc.glam[j] / double(M)).epsilon(0.01));
}

TEST_CASE("step size range matches hand evaluations") {
    auto r = step_size_range(1.0, 2.0, 0.0);
    CHECK(r.valid);
    CHECK(r.eta_max == doctest::Approx(0.5)); // 2 mu / L^2

    r = step_size_range(1.0, 2.0, 0.25);
    CHECK(r.valid);
    CHECK(r.eta_max == doctest::Approx(2.0 * 0.5 / (4.0 * 0.9375)));
    CHECK(r.eta_max == doctest::Approx(0.26666666).epsilon(1e-6));

    r = step_size_range(1.0, 2.0, 0.5); // eps L / mu = 1: empty, not an error
    CHECK_FALSE(r.valid);

    // eta_max shrinks to zero as eps L -> mu
    double prev = step_size_range(1.0, 2.0, 0.4).eta_max;
    for (double eps : {0.45, 0.49, 0.499}) {
        const double cur = step_size_range(1.0, 2.0, eps).eta_max;
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK(prev < 1e-2);
}

TEST_CASE("convergence bounds match hand evaluations") {
    ConstantsReport c;
    c.mu = 1.0;
    c.L = 2.0;
    c.eps = 0.0;
    c.sigma = 1.0;
    c.B = 0.5;
    auto b = convergence_bounds(c, 0.1);
    CHECK(b.valid);
    CHECK(b.rho == doctest::Approx(std::sqrt(0.84)));
    CHECK(b.ball_stochastic == doctest::Approx(0.1 / (1.0 - std::sqrt(0.84))));
    CHECK(b.ball_stochastic == doctest::Approx(1.1979).epsilon(1e-3));

    c.sigma = 0.0;
    b = convergence_bounds(c, 0.1);
    CHECK(b.ball_stochastic == doctest::Approx(0.0));
    c.B = 0.0;
    b = convergence_bounds(c, 0.1);
    CHECK(b.ball_model == doctest::Approx(0.0));
}

TEST_CASE("reference equilibrium is a fixed point, unique under contraction") {
    const auto ci = testing::conditioned_instance();
    const double eta = 0.01;
    const auto ref = compute_reference_equilibrium(ci.problem, ci.chance, ci.region,
                                                   ci.fixed_model, eta, 1e-12, 200000);

    // restarting from the fixed point moves less than 1e-9
    const auto again = compute_reference_equilibrium(ci.problem, ci.chance, ci.region,
                                                     ci.fixed_model, eta, 1e-12, 1000,
                                                     64, ref);
    CHECK(saddle_distance(ref, again) < 1e-9);

    // the equilibrium has x interior, beta at the cap, lambda interior
    for (std::size_t i = 0; i < ci.problem.n; ++i) {
        CHECK(ref.y.x[i] > ci.region.x_lo[i] + 0.05);
        CHECK(ref.y.x[i] < ci.region.x_hi[i] - 0.05);
        CHECK(ref.y.beta[i] == doctest::Approx(ci.region.beta_hi));
    }
    CHECK(ref.lambda[0] > 0.05);
    CHECK(ref.lambda[0] < ci.region.lambda_max - 0.05);

    Rng rng(89);
    for (int s = 0; s < 10; ++s) {
        const auto start = random_point(ci.problem, ci.region, rng);
        const auto other = compute_reference_equilibrium(ci.problem, ci.chance, ci.region,
                                                         ci.fixed_model, eta, 1e-12,
                                                         400000, 64, start);
        CHECK(saddle_distance(ref, other) < 1e-6);
    }
}

TEST_CASE("noiseless dynamics contract at the predicted rate") {
    const auto ci = testing::conditioned_instance();
    Rng rng(97);

    const auto mul = estimate_mu_L(ci.problem, ci.chance, ci.region, 20000, rng);
    CHECK(mul.mu == doctest::Approx(1.0));
    Rng eps_rng(101);
    const auto eps = estimate_lipschitz_eps(ci.fixed_model, ci.region, 2000, eps_rng);
    CHECK(eps.slope_bound == doctest::Approx(0.0));

    const auto range = step_size_range(mul.mu, mul.L, eps.slope_bound);
    REQUIRE(range.valid);
    const double eta = std::min(0.01, 0.5 * range.eta_max);

    ConstantsReport c;
    c.mu = mul.mu;
    c.L = mul.L;
    c.eps = eps.slope_bound;
    const auto bounds = convergence_bounds(c, eta);
    REQUIRE(bounds.valid);

    const auto ref = compute_reference_equilibrium(ci.problem, ci.chance, ci.region,
                                                   ci.fixed_model, eta, 1e-12, 400000);
    RunOptions opts;
    opts.eta = eta;
    opts.iters = 1000;
    opts.reference = &ref;
    SaddlePoint start = random_point(ci.problem, ci.region, rng);
    opts.start = start;
    const auto trace = mspd_run(ci.problem, ci.chance, ci.region, ci.fixed_model, opts);
    for (std::size_t k = 0; k + 1 < trace.records.size(); ++k) {
        CHECK(trace.records[k + 1].dist_to_ref <=
              bounds.rho * trace.records[k].dist_to_ref + 1e-12);
    }

    // starting at the fixed point, the stochastic loop with a deterministic
    // model stays put
    RunOptions stat;
    stat.eta = eta;
    stat.iters = 50;
    stat.reference = &ref;
    stat.start = ref;
    Rng srng(3);
    const auto st = bpd_run(ci.problem, ci.chance, ci.region, ci.fixed_model, stat, srng);
    for (const auto& r : st.records) CHECK(r.dist_to_ref < 1e-8);
}

TEST_CASE("model-based runs are bitwise reproducible") {
    const auto ci = testing::conditioned_instance();
    RunOptions opts;
    opts.eta = 0.01;
    opts.iters = 200;
    opts.compute_cv = true;
    const auto a = mspd_run(ci.problem, ci.chance, ci.region, ci.ms_model, opts);
    const auto b = mspd_run(ci.problem, ci.chance, ci.region, ci.ms_model, opts);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        CHECK(a.records[k].objective == b.records[k].objective);
        CHECK(a.records[k].cv == b.records[k].cv);
    }
    CHECK(a.final_point.y.x == b.final_point.y.x);
    CHECK(a.final_point.y.beta == b.final_point.y.beta);
    CHECK(a.final_point.lambda == b.final_point.lambda);
}

TEST_CASE("iterates stay inside the projected region") {
    const auto ci = testing::conditioned_instance();
    Rng rng(103);
    RunOptions opts;
    opts.eta = 0.05; // deliberately aggressive
    opts.iters = 400;
    opts.keep_window = 10;
    const auto trace = bpd_run(ci.problem, ci.chance, ci.region, ci.true_model, opts, rng);
    for (const auto& d : trace.window) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(d.x[i] >= ci.region.x_lo[i] - 1e-12);
            CHECK(d.x[i] <= ci.region.x_hi[i] + 1e-12);
            CHECK(d.beta[i] >= ci.region.beta_lo - 1e-12);
            CHECK(d.beta[i] <= ci.region.beta_hi + 1e-12);
        }
    }
    for (double l : trace.final_point.lambda) {
        CHECK(l >= 0.0);
        CHECK(l <= ci.region.lambda_max);
    }
}

TEST_CASE("mu/L estimator recovers the quadratic Hessian norm") {
    FlexProblem p;
    p.n = 2;
    p.epsilon_x = 0.5;
    p.epsilon_beta = 0.5;
    p.weights = {1.0, 1.0};
    p.x_ref = {0.0, 0.0};
    p.gamma = 1e6; // constraint exponentials vanish
    ChanceParams ch{1.0, 0.2, 1e-3};
    SearchRegion region = region_around(p, 1.0, 1.0, 1e-9);

    Rng rng(107);
    const auto est = estimate_mu_L(p, ch, region, 4000, rng);
    CHECK(est.mu == doctest::Approx(1e-3)); // analytic floor includes nu
    CHECK(est.L == doctest::Approx(0.5).epsilon(0.01));

    // a larger region never shrinks the estimate (statistically)
    SearchRegion wide = region_around(p, 3.0, 1.0, 1e-9);
    Rng rng2(107);
    const auto est2 = estimate_mu_L(p, ch, wide, 4000, rng2);
    CHECK(est2.L >= est.L - 1e-6);
}

TEST_CASE("constraint violation metric: exact paths") {
    FlexProblem p;
    p.n = 1;
    p.epsilon_x = 0.1;
    p.epsilon_beta = 0.1;
    p.weights = {1.0};
    p.x_ref = {0.0};
    p.gamma = 0.3;
    ResponseModel det;
    ShiftRule r;
    r.kind = ShiftKind::constant;
    r.level = 0.0;
    det.rules = {r};
    det.noise_sd = 0.0;

    std::vector<Decision> window = {Decision{{0.0}, {0.0}}};
    Rng rng(1);
    CHECK(constraint_violation_metric(p, window, det, 0, rng) ==
          doctest::Approx(-0.3).epsilon(1e-12));

    // beta = 0: the metric equals max_j h_j(x) regardless of sampling
    Rng rng2(2);
    CHECK(constraint_violation_metric(p, window, det, 500, rng2) ==
          doctest::Approx(-0.3).epsilon(1e-12));

    // exact moment path matches Monte Carlo on a noisy model
    const auto ci = testing::conditioned_instance();
    Rng rng3(3);
    std::vector<Decision> w2 = {testing::random_decision(ci.problem, rng3, 0.4, 1.0)};
    Rng mc_rng(4), ex_rng(5);
    const double exact = constraint_violation_metric(ci.problem, w2, ci.true_model, 0, ex_rng);
    const double mc = constraint_violation_metric(ci.problem, w2, ci.true_model, 200000, mc_rng);
    CHECK(exact == doctest::Approx(mc).epsilon(0.02));
}

TEST_CASE("stochastic error ball holds on the conditioned instance") {
    const auto ci = testing::conditioned_instance();
    Rng rng(109);
    const auto mul = estimate_mu_L(ci.problem, ci.chance, ci.region, 20000, rng);
    Rng eps_rng(113);
    const auto eps = estimate_lipschitz_eps(ci.true_model, ci.region, 4000, eps_rng);
    REQUIRE(eps.slope_bound * mul.L / mul.mu < 1.0);
    const auto range = step_size_range(mul.mu, mul.L, eps.slope_bound);
    REQUIRE(range.valid);
    const double eta = std::min(0.01, 0.5 * range.eta_max);

    Rng sig_rng(127);
    const double sigma = estimate_sigma(ci.problem, ci.chance, ci.true_model, ci.region,
                                        48, 256, sig_rng);
    ConstantsReport c;
    c.mu = mul.mu;
    c.L = mul.L;
    c.eps = eps.slope_bound;
    c.sigma = sigma;
    const auto bounds = convergence_bounds(c, eta);
    REQUIRE(bounds.valid);

    const auto ref = compute_reference_equilibrium(ci.problem, ci.chance, ci.region,
                                                   ci.true_model, eta, 1e-11, 500000);
    const std::size_t K = 3000, R = 50;
    const std::size_t tail_start = K + 1 - (K + 1) / 10;
    std::vector<double> tails;
    RunOptions opts;
    opts.eta = eta;
    opts.iters = K;
    opts.reference = &ref;
    for (std::size_t r = 0; r < R; ++r) {
        Rng run_rng(mix_seed(2024, r));
        const auto trace = bpd_run(ci.problem, ci.chance, ci.region, ci.true_model,
                                   opts, run_rng);
        double acc = 0.0;
        for (std::size_t k = tail_start; k <= K; ++k) acc += trace.records[k].dist_to_ref;
        tails.push_back(acc / double(K + 1 - tail_start));
    }
    double mean = 0.0;
    for (double t : tails) mean += t;
    mean /= double(tails.size());
    double var = 0.0;
    for (double t : tails) var += (t - mean) * (t - mean);
    const double se = std::sqrt(var / double(tails.size() - 1) / double(tails.size()));
    CAPTURE(mean);
    CAPTURE(bounds.ball_stochastic);
    CHECK(mean <= bounds.ball_stochastic + 3.0 * se);
}
