#include "flexo/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "flexo/kernels.hpp"

namespace flexo {

namespace {

Decision sample_decision(const SearchRegion& region, std::size_t n, Rng& rng) {
    Decision d;
    d.x.resize(n);
    d.beta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.x[i] = rng.uniform(region.x_lo[i], region.x_hi[i]);
        d.beta[i] = rng.uniform(region.beta_lo, region.beta_hi);
    }
    return d;
}

} // namespace

EpsEstimate estimate_lipschitz_eps(const ResponseModel& model,
                                   const SearchRegion& region,
                                   std::size_t pair_count, Rng& rng) {
    if (pair_count < 1)
        throw std::invalid_argument("estimate_lipschitz_eps: pair_count must be >= 1");
    const std::size_t n = model.users();
    region.validate(n);

    EpsEstimate est;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = 0.0, db = 0.0;
        model.rules[i].slope_bounds(region.x_lo[i], region.x_hi[i], region.beta_lo,
                                    region.beta_hi, dx, db);
        est.slope_bound = std::max(est.slope_bound, std::hypot(dx, db));
    }

    for (std::size_t k = 0; k < pair_count; ++k) {
        Decision a = sample_decision(region, n, rng);
        Decision b;
        if (k % 2 == 0) {
            b = sample_decision(region, n, rng);
        } else {
            b = a;
            for (std::size_t i = 0; i < n; ++i) {
                b.x[i] += 1e-3 * (region.x_hi[i] - region.x_lo[i]) * rng.uniform(-1.0, 1.0);
                b.beta[i] += 1e-3 * (region.beta_hi - region.beta_lo) * rng.uniform(-1.0, 1.0);
            }
            region.project_y(b);
        }
        const double dy = std::sqrt(kern::sumsq_diff(a.x, b.x) +
                                    kern::sumsq_diff(a.beta, b.beta));
        if (dy < 1e-14) continue;
        const auto sa = shift_vector(model, a);
        const auto sb = shift_vector(model, b);
        const double ds = std::sqrt(kern::sumsq_diff(sa, sb));
        est.sampled = std::max(est.sampled, ds / dy);
    }
    return est;
}

double estimate_sigma(const FlexProblem& p, const ChanceParams& ch,
                      const ResponseModel& model, const SearchRegion& region,
                      std::size_t points, std::size_t draws, Rng& rng) {
    if (points < 1 || draws < 2)
        throw std::invalid_argument("estimate_sigma: need points >= 1 and draws >= 2");
    region.validate(p.n);
    if (model.deterministic()) return 0.0;

    const std::size_t m = p.constraint_count();
    double sup = 0.0;
    std::vector<PhiGrad> grads(draws);
    for (std::size_t pt_i = 0; pt_i < points; ++pt_i) {
        SaddlePoint pt;
        pt.y = sample_decision(region, p.n, rng);
        pt.lambda.resize(m);
        for (double& l : pt.lambda) l = rng.uniform(0.0, region.lambda_max);

        PhiGrad mean;
        mean.gx.assign(p.n, 0.0);
        mean.gb.assign(p.n, 0.0);
        mean.glam.assign(m, 0.0);
        for (std::size_t s = 0; s < draws; ++s) {
            const auto z = sample_response(model, pt.y, rng);
            grads[s] = grad_phi(p, ch, pt, z);
            kern::axpy(1.0, grads[s].gx, mean.gx);
            kern::axpy(1.0, grads[s].gb, mean.gb);
            kern::axpy(1.0, grads[s].glam, mean.glam);
        }
        const double inv = 1.0 / double(draws);
        for (double& v : mean.gx) v *= inv;
        for (double& v : mean.gb) v *= inv;
        for (double& v : mean.glam) v *= inv;

        double dev_y = 0.0, dev_l = 0.0;
        for (std::size_t s = 0; s < draws; ++s) {
            dev_y += std::sqrt(kern::sumsq_diff(grads[s].gx, mean.gx) +
                               kern::sumsq_diff(grads[s].gb, mean.gb));
            dev_l += std::sqrt(kern::sumsq_diff(grads[s].glam, mean.glam));
        }
        sup = std::max(sup, std::numbers::sqrt2 * inv * std::max(dev_y, dev_l));
    }
    return sup;
}

BEstimate estimate_misspecification_bound(const ResponseModel& true_model,
                                          const ResponseModel& ms_model,
                                          const SearchRegion& region,
                                          std::size_t points, std::size_t draws,
                                          Rng& rng) {
    const std::size_t n = true_model.users();
    if (ms_model.users() != n)
        throw std::invalid_argument("estimate_misspecification_bound: size mismatch");
    if (points < 1 || draws < 1)
        throw std::invalid_argument("estimate_misspecification_bound: bad counts");
    region.validate(n);

    BEstimate est;
    est.support_cap = 2.0 * std::sqrt(double(n));
    std::vector<double> zt(n), zm(n);
    for (std::size_t pt_i = 0; pt_i < points; ++pt_i) {
        const Decision y = sample_decision(region, n, rng);
        const auto st = shift_vector(true_model, y);
        const auto sm = shift_vector(ms_model, y);
        double acc = 0.0;
        for (std::size_t s = 0; s < draws; ++s) {
            for (std::size_t i = 0; i < n; ++i) {
                const double g = rng.normal();
                zt[i] = std::clamp(st[i] + true_model.noise_sd * g, -1.0, 1.0);
                zm[i] = std::clamp(sm[i] + ms_model.noise_sd * g, -1.0, 1.0);
            }
            acc += std::sqrt(kern::sumsq_diff(zt, zm));
        }
        est.coupling = std::max(est.coupling, acc / double(draws));
    }
    return est;
}

} // namespace flexo
