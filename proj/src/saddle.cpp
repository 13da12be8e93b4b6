#include "flexo/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "flexo/kernels.hpp"

namespace flexo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SaddlePoint default_start(const FlexProblem& p, const SearchRegion& region) {
    SaddlePoint pt;
    pt.y.x = p.x_ref;
    pt.y.beta.assign(p.n, region.beta_lo);
    region.project_y(pt.y);
    pt.lambda.assign(p.constraint_count(), 0.0);
    return pt;
}

// max_j E[h_j] from the per-coordinate first and second moments of D(y).
double exact_cv(const FlexProblem& p, const Decision& d,
                std::span<const double> m1, std::span<const double> m2) {
    double ball = -p.gamma;
    for (std::size_t i = 0; i < p.n; ++i) {
        const double a = d.x[i] - p.x_ref[i];
        const double b = d.beta[i];
        ball += a * a + 2.0 * a * b * m1[i] + b * b * m2[i];
    }
    double cv = ball;
    for (std::size_t j = 0; j < p.affine_rows(); ++j) {
        const auto row = p.d_row(j);
        double m = -p.e[j];
        for (std::size_t i = 0; i < p.n; ++i)
            m += row[i] * (d.x[i] + d.beta[i] * m1[i]);
        cv = std::max(cv, m);
    }
    return cv;
}

double exact_cv_for_model(const FlexProblem& p, const ResponseModel& model,
                          const Decision& d, std::size_t quad_nodes) {
    const auto laws = coordinate_laws(model, d, quad_nodes);
    std::vector<double> m1(p.n), m2(p.n);
    for (std::size_t i = 0; i < p.n; ++i) {
        m1[i] = laws[i].mean();
        m2[i] = laws[i].second_moment();
    }
    return exact_cv(p, d, m1, m2);
}

struct RunMode {
    bool stochastic = false;
    const ResponseModel* model = nullptr;
};

IterateTrace run_loop(const FlexProblem& p, const ChanceParams& ch,
                      const SearchRegion& region, const RunMode& mode,
                      const RunOptions& opts, Rng* rng) {
    p.validate();
    ch.validate();
    region.validate(p.n);
    if (opts.eta <= 0.0) throw std::invalid_argument("run: eta must be positive");

    SaddlePoint pt = opts.start ? *opts.start : default_start(p, region);
    region.project_y(pt.y);
    region.project_lambda(pt.lambda);
    if (pt.lambda.size() != p.constraint_count())
        throw std::invalid_argument("run: multiplier size mismatch");

    IterateTrace trace;
    trace.records.reserve(opts.iters + 1);

    auto record = [&](std::size_t k) {
        TraceRecord r;
        r.iter = k;
        r.dist_to_ref = opts.reference ? saddle_distance(pt, *opts.reference) : kNaN;
        r.objective = eval_objective(p, pt.y);
        r.cv = opts.compute_cv
                   ? exact_cv_for_model(p, *mode.model, pt.y, opts.quad_nodes)
                   : kNaN;
        trace.records.push_back(r);
        if (opts.keep_window > 0) {
            if (trace.window.size() == opts.keep_window)
                trace.window.erase(trace.window.begin());
            trace.window.push_back(pt.y);
        }
    };

    std::vector<double> z;
    for (std::size_t k = 0; k < opts.iters; ++k) {
        record(k);
        PhiGrad g;
        if (mode.stochastic) {
            z = sample_response(*mode.model, pt.y, *rng);
            g = grad_phi(p, ch, pt, z);
        } else {
            g = mean_grad_phi(p, ch, *mode.model, pt, opts.quad_nodes);
        }
        SaddlePoint next = pt;
        kern::axpy(-opts.eta, g.gx, next.y.x);
        kern::axpy(-opts.eta, g.gb, next.y.beta);
        kern::axpy(opts.eta, g.glam, next.lambda);
        region.project_y(next.y);
        region.project_lambda(next.lambda);
        const double step = saddle_distance(next, pt);
        pt = std::move(next);
        if (opts.stop_tol > 0.0 && step <= opts.stop_tol) {
            record(k + 1);
            trace.final_point = pt;
            return trace;
        }
    }
    record(opts.iters);
    trace.final_point = pt;
    return trace;
}

} // namespace

void ChanceParams::validate() const {
    if (u <= 0.0) throw std::invalid_argument("chance: u must be positive");
    if (delta <= 0.0 || delta > 1.0)
        throw std::invalid_argument("chance: delta must lie in (0, 1]");
    if (nu < 0.0) throw std::invalid_argument("chance: nu must be nonnegative");
}

void SearchRegion::validate(std::size_t n) const {
    if (x_lo.size() != n || x_hi.size() != n)
        throw std::invalid_argument("region: x bounds must have length n");
    for (std::size_t i = 0; i < n; ++i)
        if (x_lo[i] > x_hi[i]) throw std::invalid_argument("region: empty x box");
    if (beta_lo < 0.0 || beta_lo > beta_hi)
        throw std::invalid_argument("region: invalid beta bounds");
    if (lambda_max <= 0.0)
        throw std::invalid_argument("region: lambda_max must be positive");
}

void SearchRegion::project_y(Decision& y) const {
    for (std::size_t i = 0; i < y.size(); ++i) {
        y.x[i] = std::clamp(y.x[i], x_lo[i], x_hi[i]);
        y.beta[i] = std::clamp(y.beta[i], beta_lo, beta_hi);
    }
}

void SearchRegion::project_lambda(std::vector<double>& lambda) const {
    for (double& l : lambda) l = std::clamp(l, 0.0, lambda_max);
}

double saddle_distance(const SaddlePoint& a, const SaddlePoint& b) {
    return std::sqrt(kern::sumsq_diff(a.y.x, b.y.x) +
                     kern::sumsq_diff(a.y.beta, b.y.beta) +
                     kern::sumsq_diff(a.lambda, b.lambda));
}

double phi_value(const FlexProblem& p, const ChanceParams& ch,
                 const SaddlePoint& pt, std::span<const double> z) {
    ch.validate();
    const auto v = realize(pt.y, z);
    const auto cv = eval_constraints(p, v);
    double phi = eval_objective(p, pt.y);
    for (std::size_t j = 0; j < cv.values.size(); ++j)
        phi += pt.lambda[j] * (std::exp(cv.values[j] / ch.u) - ch.delta);
    phi -= 0.5 * ch.nu * kern::dot(pt.lambda, pt.lambda);
    return phi;
}

PhiGrad grad_phi(const FlexProblem& p, const ChanceParams& ch,
                 const SaddlePoint& pt, std::span<const double> z) {
    ch.validate();
    const std::size_t n = p.n;
    const auto v = realize(pt.y, z);
    const auto cv = eval_constraints(p, v);

    PhiGrad g;
    g.gx.resize(n);
    g.gb.resize(n);
    g.glam.resize(cv.values.size());
    for (std::size_t i = 0; i < n; ++i) {
        g.gx[i] = p.epsilon_x * pt.y.x[i];
        g.gb[i] = p.weights[i] * (-1.0 + p.epsilon_beta * pt.y.beta[i]);
    }
    for (std::size_t j = 0; j < cv.values.size(); ++j) {
        const double term = std::exp(cv.values[j] / ch.u);
        g.glam[j] = term - ch.delta - ch.nu * pt.lambda[j];
        const double scale = pt.lambda[j] * term / ch.u;
        if (scale == 0.0) continue;
        if (j == 0) {
            for (std::size_t i = 0; i < n; ++i) {
                const double dh = 2.0 * (v[i] - p.x_ref[i]);
                g.gx[i] += scale * dh;
                g.gb[i] += scale * dh * z[i];
            }
        } else {
            const auto row = p.d_row(j - 1);
            for (std::size_t i = 0; i < n; ++i) {
                g.gx[i] += scale * row[i];
                g.gb[i] += scale * row[i] * z[i];
            }
        }
    }
    return g;
}

PhiGrad mean_grad_phi(const FlexProblem& p, const ChanceParams& ch,
                      const ResponseModel& model, const SaddlePoint& pt,
                      std::size_t quad_nodes) {
    ch.validate();
    const std::size_t n = p.n;
    const auto laws = coordinate_laws(model, pt.y, quad_nodes);

    PhiGrad g;
    g.gx.resize(n);
    g.gb.resize(n);
    g.glam.resize(p.constraint_count());
    for (std::size_t i = 0; i < n; ++i) {
        g.gx[i] = p.epsilon_x * pt.y.x[i];
        g.gb[i] = p.weights[i] * (-1.0 + p.epsilon_beta * pt.y.beta[i]);
    }
    for (std::size_t j = 0; j < p.constraint_count(); ++j) {
        const auto terms = constraint_mean_terms(p, laws, pt.y, j, ch.u);
        g.glam[j] = terms.value - ch.delta - ch.nu * pt.lambda[j];
        const double scale = pt.lambda[j] / ch.u;
        if (scale == 0.0) continue;
        kern::axpy(scale, terms.gx, g.gx);
        kern::axpy(scale, terms.gb, g.gb);
    }
    return g;
}

IterateTrace bpd_run(const FlexProblem& p, const ChanceParams& ch,
                     const SearchRegion& region, const ResponseModel& model,
                     const RunOptions& opts, Rng& rng) {
    RunMode mode;
    mode.stochastic = true;
    mode.model = &model;
    RunOptions o = opts;
    o.stop_tol = 0.0; // fixed budget by design
    return run_loop(p, ch, region, mode, o, &rng);
}

IterateTrace mspd_run(const FlexProblem& p, const ChanceParams& ch,
                      const SearchRegion& region, const ResponseModel& model,
                      const RunOptions& opts) {
    RunMode mode;
    mode.stochastic = false;
    mode.model = &model;
    return run_loop(p, ch, region, mode, opts, nullptr);
}

SaddlePoint compute_reference_equilibrium(const FlexProblem& p, const ChanceParams& ch,
                                          const SearchRegion& region,
                                          const ResponseModel& model, double eta,
                                          double tol, std::size_t max_iters,
                                          std::size_t quad_nodes,
                                          std::optional<SaddlePoint> start) {
    p.validate();
    ch.validate();
    region.validate(p.n);

    SaddlePoint pt = start ? *start : default_start(p, region);
    region.project_y(pt.y);
    region.project_lambda(pt.lambda);
    double step = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < max_iters; ++k) {
        const PhiGrad g = mean_grad_phi(p, ch, model, pt, quad_nodes);
        SaddlePoint next = pt;
        kern::axpy(-eta, g.gx, next.y.x);
        kern::axpy(-eta, g.gb, next.y.beta);
        kern::axpy(eta, g.glam, next.lambda);
        region.project_y(next.y);
        region.project_lambda(next.lambda);
        step = saddle_distance(next, pt);
        pt = std::move(next);
        if (step <= tol) return pt;
    }
    throw std::runtime_error(
        "reference equilibrium did not converge: step norm " + std::to_string(step) +
        " after " + std::to_string(max_iters) + " iterations (tol " +
        std::to_string(tol) + ")");
}

StepSizeRange step_size_range(double mu, double L, double eps) {
    StepSizeRange r;
    if (mu <= 0.0 || L <= 0.0 || eps < 0.0) return r;
    if (eps >= 1.0 || eps * L >= mu) return r;
    r.valid = true;
    r.eta_max = 2.0 * (mu - eps * L) / (L * L * (1.0 - eps * eps));
    return r;
}

ConvergenceBounds convergence_bounds(const ConstantsReport& c, double eta) {
    ConvergenceBounds b;
    const double inner = 1.0 - 2.0 * eta * c.mu + eta * eta * c.L * c.L;
    b.rho = std::sqrt(std::max(inner, 0.0)) + eta * c.eps * c.L;
    b.valid = b.rho < 1.0;
    if (b.valid) {
        b.ball_stochastic = eta * c.sigma / (1.0 - b.rho);
        b.ball_model = std::numbers::sqrt2 * eta * c.L * c.B / (1.0 - b.rho);
    } else {
        // rho >= 1: the theory provides no ball at this step size
        b.ball_stochastic = std::numeric_limits<double>::quiet_NaN();
        b.ball_model = std::numeric_limits<double>::quiet_NaN();
    }
    return b;
}

MuLEstimate estimate_mu_L(const FlexProblem& p, const ChanceParams& ch,
                          const SearchRegion& region, std::size_t pairs, Rng& rng) {
    p.validate();
    region.validate(p.n);
    MuLEstimate est;
    est.mu = std::min(p.epsilon_x, ch.nu);
    for (std::size_t i = 0; i < p.n; ++i)
        est.mu = std::min(est.mu, p.weights[i] * p.epsilon_beta);

    const std::size_t m = p.constraint_count();
    auto sample_point = [&]() {
        SaddlePoint pt;
        pt.y.x.resize(p.n);
        pt.y.beta.resize(p.n);
        pt.lambda.resize(m);
        for (std::size_t i = 0; i < p.n; ++i) {
            pt.y.x[i] = rng.uniform(region.x_lo[i], region.x_hi[i]);
            pt.y.beta[i] = rng.uniform(region.beta_lo, region.beta_hi);
        }
        for (double& l : pt.lambda) l = rng.uniform(0.0, region.lambda_max);
        return pt;
    };

    std::vector<double> z(p.n);
    double sup = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
        SaddlePoint a = sample_point();
        SaddlePoint b;
        if (k % 2 == 0) {
            b = sample_point();
        } else {
            // short segment: local gradient variation
            b = a;
            for (std::size_t i = 0; i < p.n; ++i) {
                b.y.x[i] += 1e-3 * (region.x_hi[i] - region.x_lo[i]) * rng.uniform(-1.0, 1.0);
                b.y.beta[i] += 1e-3 * (region.beta_hi - region.beta_lo) * rng.uniform(-1.0, 1.0);
            }
            for (double& l : b.lambda) l += 1e-3 * region.lambda_max * rng.uniform(-1.0, 1.0);
            region.project_y(b.y);
            region.project_lambda(b.lambda);
        }
        for (double& v : z) v = rng.uniform(-1.0, 1.0);
        const double dp = saddle_distance(a, b);
        if (dp < 1e-14) continue;
        const PhiGrad ga = grad_phi(p, ch, a, z);
        const PhiGrad gb = grad_phi(p, ch, b, z);
        const double dg = std::sqrt(kern::sumsq_diff(ga.gx, gb.gx) +
                                    kern::sumsq_diff(ga.gb, gb.gb) +
                                    kern::sumsq_diff(ga.glam, gb.glam));
        sup = std::max(sup, dg / dp);
    }
    est.L = sup;
    return est;
}

double constraint_violation_metric(const FlexProblem& p,
                                   std::span<const Decision> window,
                                   const ResponseModel& model,
                                   std::size_t samples, Rng& rng,
                                   std::size_t quad_nodes) {
    if (window.empty())
        throw std::invalid_argument("constraint_violation_metric: empty window");
    double acc = 0.0;
    std::vector<double> means(p.constraint_count());
    for (const Decision& d : window) {
        if (samples == 0) {
            acc += exact_cv_for_model(p, model, d, quad_nodes);
            continue;
        }
        std::fill(means.begin(), means.end(), 0.0);
        for (std::size_t s = 0; s < samples; ++s) {
            const auto z = sample_response(model, d, rng);
            const auto v = realize(d, z);
            const auto cv = eval_constraints(p, v);
            for (std::size_t j = 0; j < means.size(); ++j) means[j] += cv.values[j];
        }
        double worst = -std::numeric_limits<double>::infinity();
        for (double mj : means) worst = std::max(worst, mj / double(samples));
        acc += worst;
    }
    return acc / double(window.size());
}

} // namespace flexo
