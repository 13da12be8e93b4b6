#include "flexo/response.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "flexo/kernels.hpp"

namespace flexo {

namespace {

constexpr double kClampLo = -1.0;
constexpr double kClampHi = 1.0;
// Standardized tail cut for the interior integral; the discarded Gaussian
// mass is below 1e-15.
constexpr double kTailCut = 8.0;

double clamp_unit(double v) { return std::clamp(v, kClampLo, kClampHi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct GaussLegendre {
    std::vector<double> nodes;   // on [-1, 1]
    std::vector<double> weights;
};

GaussLegendre compute_gauss_legendre(std::size_t q) {
    GaussLegendre gl;
    gl.nodes.resize(q);
    gl.weights.resize(q);
    for (std::size_t i = 0; i < (q + 1) / 2; ++i) {
        double t = std::cos(std::numbers::pi * (double(i) + 0.75) / (double(q) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            // Legendre recurrence for P_q(t) and P'_q(t).
            double p0 = 1.0, p1 = t;
            for (std::size_t k = 2; k <= q; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / double(k);
                p0 = p1;
                p1 = p2;
            }
            dp = double(q) * (t * p1 - p0) / (t * t - 1.0);
            const double step = p1 / dp;
            t -= step;
            if (std::abs(step) < 1e-15) break;
        }
        gl.nodes[i] = -t;
        gl.nodes[q - 1 - i] = t;
        const double w = 2.0 / ((1.0 - t * t) * dp * dp);
        gl.weights[i] = w;
        gl.weights[q - 1 - i] = w;
    }
    return gl;
}

const GaussLegendre& gauss_legendre(std::size_t q) {
    static std::mutex mu;
    static std::map<std::size_t, GaussLegendre> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(q);
    if (it == cache.end()) it = cache.emplace(q, compute_gauss_legendre(q)).first;
    return it->second;
}

} // namespace

double ShiftRule::shift(double x, double beta) const {
    switch (kind) {
    case ShiftKind::constant:
        return level;
    case ShiftKind::affine:
        return level + slope_x * (x - x0) + slope_beta * (beta - b0);
    case ShiftKind::band_reaction:
        if (x <= band_lo) return gain * beta * (band_lo - x);
        if (x >= band_hi) return -gain * beta * (x - band_hi);
        return 0.0;
    case ShiftKind::linear_pull:
        return -gain * beta * (x - center);
    }
    return 0.0;
}

void ShiftRule::slope_bounds(double x_lo, double x_hi, double beta_lo, double beta_hi,
                             double& dx, double& dbeta) const {
    const double bmax = std::max(std::abs(beta_lo), std::abs(beta_hi));
    switch (kind) {
    case ShiftKind::constant:
        dx = dbeta = 0.0;
        return;
    case ShiftKind::affine:
        dx = std::abs(slope_x);
        dbeta = std::abs(slope_beta);
        return;
    case ShiftKind::band_reaction: {
        const bool below = x_lo < band_lo;
        const bool above = x_hi > band_hi;
        dx = (below || above) ? gain * bmax : 0.0;
        double span = 0.0;
        if (below) span = std::max(span, band_lo - x_lo);
        if (above) span = std::max(span, x_hi - band_hi);
        dbeta = gain * span;
        return;
    }
    case ShiftKind::linear_pull:
        dx = gain * bmax;
        dbeta = gain * std::max(std::abs(x_lo - center), std::abs(x_hi - center));
        return;
    }
}

ResponseModel make_band_reaction_model(std::size_t n, double noise_sd,
                                       double band_lo, double band_hi, double gain) {
    ResponseModel m;
    ShiftRule r;
    r.kind = ShiftKind::band_reaction;
    r.band_lo = band_lo;
    r.band_hi = band_hi;
    r.gain = gain;
    m.rules.assign(n, r);
    m.noise_sd = noise_sd;
    return m;
}

ResponseModel make_linear_pull_model(std::size_t n, double center, double gain) {
    ResponseModel m;
    ShiftRule r;
    r.kind = ShiftKind::linear_pull;
    r.center = center;
    r.gain = gain;
    m.rules.assign(n, r);
    m.noise_sd = 0.0;
    return m;
}

std::vector<double> shift_vector(const ResponseModel& m, const Decision& d) {
    if (m.users() != d.size())
        throw std::invalid_argument("shift_vector: model/decision size mismatch");
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        out[i] = m.rules[i].shift(d.x[i], d.beta[i]);
    return out;
}

std::vector<double> sample_response(const ResponseModel& m, const Decision& d,
                                    Rng& rng) {
    std::vector<double> z = shift_vector(m, d);
    if (!m.deterministic()) {
        for (double& v : z) v += rng.normal(0.0, m.noise_sd);
    }
    for (double& v : z) v = clamp_unit(v);
    return z;
}

double CoordinateLaw::expect(const std::function<double(double)>& f) const {
    double acc = 0.0;
    if (mass_lo > 0.0) acc += mass_lo * f(kClampLo);
    if (mass_hi > 0.0) acc += mass_hi * f(kClampHi);
    for (std::size_t q = 0; q < nodes.size(); ++q) acc += weights[q] * f(nodes[q]);
    return acc;
}

double CoordinateLaw::mean() const {
    return mass_hi - mass_lo + kern::dot(weights, nodes);
}

double CoordinateLaw::second_moment() const {
    double acc = mass_lo + mass_hi;
    for (std::size_t q = 0; q < nodes.size(); ++q)
        acc += weights[q] * nodes[q] * nodes[q];
    return acc;
}

CoordinateLaw make_coordinate_law(double shift, double sd, std::size_t quad_nodes) {
    CoordinateLaw law;
    law.shift = shift;
    law.sd = sd;
    if (sd == 0.0) {
        law.nodes.assign(1, clamp_unit(shift));
        law.weights.assign(1, 1.0);
        return law;
    }
    if (quad_nodes < 2)
        throw std::invalid_argument("make_coordinate_law: nodes must be >= 2");
    law.mass_lo = normal_cdf((kClampLo - shift) / sd);
    law.mass_hi = 1.0 - normal_cdf((kClampHi - shift) / sd);
    const double xlo = std::max((kClampLo - shift) / sd, -kTailCut);
    const double xhi = std::min((kClampHi - shift) / sd, kTailCut);
    if (xhi <= xlo) return law; // all mass in the atoms
    const auto& gl = gauss_legendre(quad_nodes);
    const double mid = 0.5 * (xhi + xlo);
    const double half = 0.5 * (xhi - xlo);
    law.nodes.resize(quad_nodes);
    law.weights.resize(quad_nodes);
    for (std::size_t q = 0; q < quad_nodes; ++q) {
        const double xs = mid + half * gl.nodes[q];
        law.nodes[q] = shift + sd * xs;
        law.weights[q] = -0.5 * xs * xs; // exponent of the standard normal pdf
    }
    kern::exp_inplace(law.weights);
    const double scale = half / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t q = 0; q < quad_nodes; ++q) law.weights[q] *= scale * gl.weights[q];
    return law;
}

std::vector<CoordinateLaw> coordinate_laws(const ResponseModel& m, const Decision& d,
                                           std::size_t quad_nodes) {
    const auto shifts = shift_vector(m, d);
    std::vector<CoordinateLaw> laws;
    laws.reserve(d.size());
    for (double s : shifts) laws.push_back(make_coordinate_law(s, m.noise_sd, quad_nodes));
    return laws;
}

namespace {

// One-coordinate integrals used by the factorized expectations:
//   affine rows: F = E exp(c z),           G = E exp(c z) z
//   ball:        F = E exp((a + b z)^2/u), P = E f 2(a+bz), Q = E f 2(a+bz) z
struct AffineFactors {
    double F = 1.0, G = 0.0;
};

AffineFactors affine_factors(const CoordinateLaw& law, double coef) {
    AffineFactors out;
    std::vector<double> ev(law.nodes.size());
    for (std::size_t q = 0; q < ev.size(); ++q) ev[q] = coef * law.nodes[q];
    kern::exp_inplace(ev);
    double F = kern::dot(ev, law.weights);
    double G = 0.0;
    for (std::size_t q = 0; q < ev.size(); ++q)
        G += ev[q] * law.weights[q] * law.nodes[q];
    if (law.mass_lo > 0.0) {
        const double f = std::exp(-coef);
        F += law.mass_lo * f;
        G -= law.mass_lo * f;
    }
    if (law.mass_hi > 0.0) {
        const double f = std::exp(coef);
        F += law.mass_hi * f;
        G += law.mass_hi * f;
    }
    out.F = F;
    out.G = G;
    return out;
}

struct BallFactors {
    double F = 1.0, P = 0.0, Q = 0.0;
};

BallFactors ball_factors(const CoordinateLaw& law, double a, double b, double inv_u) {
    BallFactors out;
    const std::size_t q_n = law.nodes.size();
    std::vector<double> t(q_n), ev(q_n);
    for (std::size_t q = 0; q < q_n; ++q) {
        t[q] = a + b * law.nodes[q];
        ev[q] = t[q] * t[q] * inv_u;
    }
    kern::exp_inplace(ev);
    double F = kern::dot(ev, law.weights);
    double P = 0.0, Q = 0.0;
    for (std::size_t q = 0; q < q_n; ++q) {
        const double wf = ev[q] * law.weights[q];
        P += wf * 2.0 * t[q];
        Q += wf * 2.0 * t[q] * law.nodes[q];
    }
    if (law.mass_lo > 0.0) {
        const double tl = a - b;
        const double f = std::exp(tl * tl * inv_u);
        F += law.mass_lo * f;
        P += law.mass_lo * f * 2.0 * tl;
        Q -= law.mass_lo * f * 2.0 * tl;
    }
    if (law.mass_hi > 0.0) {
        const double th = a + b;
        const double f = std::exp(th * th * inv_u);
        F += law.mass_hi * f;
        P += law.mass_hi * f * 2.0 * th;
        Q += law.mass_hi * f * 2.0 * th;
    }
    out.F = F;
    out.P = P;
    out.Q = Q;
    return out;
}

double mc_expect_exp(const FlexProblem& p, const ResponseModel& m, const Decision& d,
                     const ExpectationRequest& req) {
    const std::size_t n = p.n;
    const auto shifts = shift_vector(m, d);
    Rng rng(mix_seed(req.seed, 0x6d63u));
    const std::size_t block = std::min<std::size_t>(req.samples, 4096);
    std::vector<double> noise(block), zcol(block), h(block);
    const bool ball = req.constraint == 0;
    const double base = ball ? 0.0
                             : kern::dot(p.d_row(req.constraint - 1), d.x) -
                                   p.e[req.constraint - 1];
    double acc = 0.0;
    std::size_t left = req.samples;
    while (left > 0) {
        const std::size_t bs = std::min(left, block);
        std::span<double> hb(h.data(), bs);
        std::fill(hb.begin(), hb.end(), base);
        for (std::size_t i = 0; i < n; ++i) {
            std::span<double> nb(noise.data(), bs), zb(zcol.data(), bs);
            if (m.deterministic())
                std::fill(nb.begin(), nb.end(), 0.0);
            else
                rng.fill_normal(nb, 0.0, m.noise_sd);
            kern::shift_clamp(zb, nb, shifts[i], kClampLo, kClampHi);
            if (ball) {
                kern::square_affine_acc(hb, zb, d.x[i] - p.x_ref[i], d.beta[i]);
            } else {
                const double coef = p.d_row(req.constraint - 1)[i] * d.beta[i];
                if (coef != 0.0) kern::axpy(coef, zb, hb);
            }
        }
        acc += kern::exp_scaled_sum(hb, 1.0 / req.u);
        left -= bs;
    }
    const double mean = acc / double(req.samples);
    return ball ? mean * std::exp(-p.gamma / req.u) : mean;
}

} // namespace

double expect_exp_constraint(const FlexProblem& p, const ResponseModel& m,
                             const Decision& d, const ExpectationRequest& req) {
    if (req.u <= 0.0)
        throw std::invalid_argument("expect_exp_constraint: u must be positive");
    if (req.constraint >= p.constraint_count())
        throw std::invalid_argument("expect_exp_constraint: bad constraint index");
    if (d.size() != p.n)
        throw std::invalid_argument("expect_exp_constraint: dimension mismatch");
    if (req.method == ExpectationRequest::Method::monte_carlo) {
        if (req.samples < 1)
            throw std::invalid_argument("expect_exp_constraint: samples must be >= 1");
        return mc_expect_exp(p, m, d, req);
    }
    const auto laws = coordinate_laws(m, d, req.quad_nodes);
    return constraint_mean_terms(p, laws, d, req.constraint, req.u).value;
}

ConstraintMeanTerms constraint_mean_terms(const FlexProblem& p,
                                          std::span<const CoordinateLaw> laws,
                                          const Decision& d, std::size_t j, double u) {
    if (u <= 0.0) throw std::invalid_argument("constraint_mean_terms: u must be positive");
    const std::size_t n = p.n;
    ConstraintMeanTerms out;
    out.gx.assign(n, 0.0);
    out.gb.assign(n, 0.0);
    const double inv_u = 1.0 / u;

    if (j == 0) {
        std::vector<BallFactors> f(n);
        double prod = std::exp(-p.gamma * inv_u);
        for (std::size_t i = 0; i < n; ++i) {
            f[i] = ball_factors(laws[i], d.x[i] - p.x_ref[i], d.beta[i], inv_u);
            prod *= f[i].F;
        }
        out.value = prod;
        for (std::size_t i = 0; i < n; ++i) {
            out.gx[i] = prod * f[i].P / f[i].F;
            out.gb[i] = prod * f[i].Q / f[i].F;
        }
        return out;
    }

    const auto row = p.d_row(j - 1);
    double prod = std::exp((kern::dot(row, d.x) - p.e[j - 1]) * inv_u);
    std::vector<AffineFactors> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = affine_factors(laws[i], row[i] * d.beta[i] * inv_u);
        prod *= f[i].F;
    }
    out.value = prod;
    for (std::size_t i = 0; i < n; ++i) {
        out.gx[i] = prod * row[i];
        out.gb[i] = prod * row[i] * f[i].G / f[i].F;
    }
    return out;
}

} // namespace flexo
