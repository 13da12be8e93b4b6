#include "flexo/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "flexo/kernels.hpp"

namespace flexo {

void FlexProblem::validate() const {
    if (n == 0) throw std::invalid_argument("problem has no users");
    if (weights.size() != n || x_ref.size() != n)
        throw std::invalid_argument("weights/x_ref size must equal n");
    if (D.size() != e.size() * n)
        throw std::invalid_argument("D must have |e| rows of length n");
    if (gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
    if (epsilon_x <= 0.0 || epsilon_beta <= 0.0)
        throw std::invalid_argument("epsilon_x and epsilon_beta must be positive");
    for (double w : weights)
        if (w < 0.0) throw std::invalid_argument("weights must be nonnegative");
}

double ConstraintValues::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v);
    return m;
}

std::vector<double> realize(const Decision& d, std::span<const double> z) {
    if (z.size() != d.size() || d.beta.size() != d.size())
        throw std::invalid_argument("realize: dimension mismatch");
    std::vector<double> v(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (std::abs(z[i]) > 1.0)
            throw std::invalid_argument("realize: z outside [-1,1]^n");
        v[i] = d.x[i] + d.beta[i] * z[i];
    }
    return v;
}

double eval_objective(const FlexProblem& p, const Decision& d) {
    if (d.size() != p.n || d.beta.size() != p.n)
        throw std::invalid_argument("eval_objective: dimension mismatch");
    const double quad = kern::dot(d.x, d.x);
    double flex = 0.0;
    for (std::size_t i = 0; i < p.n; ++i)
        flex += p.weights[i] * (-d.beta[i] + 0.5 * p.epsilon_beta * d.beta[i] * d.beta[i]);
    return 0.5 * p.epsilon_x * quad + flex;
}

ConstraintValues eval_constraints(const FlexProblem& p, std::span<const double> v) {
    if (v.size() != p.n)
        throw std::invalid_argument("eval_constraints: dimension mismatch");
    ConstraintValues out;
    out.values.resize(p.constraint_count());
    out.values[0] = kern::sumsq_diff(v, p.x_ref) - p.gamma;
    for (std::size_t j = 0; j < p.affine_rows(); ++j)
        out.values[1 + j] = kern::dot(p.d_row(j), v) - p.e[j];
    return out;
}

double worst_case_affine_margin(std::span<const double> d_row, double e_val,
                                const Decision& d) {
    double m = -e_val;
    for (std::size_t i = 0; i < d.size(); ++i)
        m += d_row[i] * d.x[i] + std::abs(d_row[i]) * d.beta[i];
    return m;
}

std::vector<double> worst_case_norm_envelope(const Decision& d,
                                             std::span<const double> x_ref) {
    std::vector<double> s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        s[i] = d.beta[i] + std::abs(d.x[i] - x_ref[i]);
    return s;
}

double worst_case_margin(const FlexProblem& p, const Decision& d) {
    const auto s = worst_case_norm_envelope(d, p.x_ref);
    double m = kern::dot(s, s) - p.gamma;
    for (std::size_t j = 0; j < p.affine_rows(); ++j)
        m = std::max(m, worst_case_affine_margin(p.d_row(j), p.e[j], d));
    return m;
}

RobustCertificate vertex_feasibility_oracle(const FlexProblem& p, const Decision& d,
                                            double tol, std::size_t n_cap) {
    if (p.n > n_cap)
        throw std::invalid_argument("vertex_feasibility_oracle: n = " +
                                    std::to_string(p.n) + " exceeds the cap of " +
                                    std::to_string(n_cap));
    RobustCertificate cert;
    cert.worst_margin = -std::numeric_limits<double>::infinity();
    cert.worst_vertex.assign(p.n, 1);

    std::vector<double> z(p.n);
    const std::size_t vertices = std::size_t{1} << p.n;
    for (std::size_t mask = 0; mask < vertices; ++mask) {
        for (std::size_t i = 0; i < p.n; ++i)
            z[i] = (mask >> i) & 1 ? 1.0 : -1.0;
        const auto v = realize(d, z);
        const double m = eval_constraints(p, v).max_value();
        if (m > cert.worst_margin) {
            cert.worst_margin = m;
            for (std::size_t i = 0; i < p.n; ++i)
                cert.worst_vertex[i] = (mask >> i) & 1 ? 1 : -1;
        }
    }
    cert.feasible = cert.worst_margin <= tol;
    return cert;
}

} // namespace flexo
