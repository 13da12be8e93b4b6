#include "flexo/robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "flexo/kernels.hpp"

namespace flexo {

namespace {

// Variable layout inside the solver: [x | beta | s | t], each block length n.
struct Workspace {
    const FlexProblem& p;
    bool proximity;
    const Decision* target;
    std::size_t n, c, mc;

    std::vector<double> lo, hi;       // variable box
    std::vector<double> abs_row_sum;  // |d_j| per row, flattened like D
    double jj_bound;                  // sum of constraint gradient norms^2

    Workspace(const ReformulatedProgram& prog, double beta_cap)
        : p(prog.problem),
          proximity(prog.proximity),
          target(&prog.y_target),
          n(prog.problem.n),
          c(prog.problem.affine_rows()),
          mc(prog.constraint_count()) {
        const double r = std::sqrt(p.gamma) + 1.0;
        lo.resize(4 * n);
        hi.resize(4 * n);
        for (std::size_t i = 0; i < n; ++i) {
            lo[i] = p.x_ref[i] - r;          hi[i] = p.x_ref[i] + r;
            lo[n + i] = 0.0;                 hi[n + i] = std::min(r, beta_cap);
            lo[2 * n + i] = 0.0;             hi[2 * n + i] = r;
            lo[3 * n + i] = 0.0;             hi[3 * n + i] = r;
        }
        abs_row_sum.resize(p.D.size());
        for (std::size_t k = 0; k < p.D.size(); ++k) abs_row_sum[k] = std::abs(p.D[k]);

        jj_bound = 4.0 * (p.gamma + 1.0) + 3.0 * double(n) + 4.0 * double(n);
        for (std::size_t j = 0; j < c; ++j) {
            const auto d = p.d_row(j);
            jj_bound += 2.0 * kern::dot(d, d);
        }
    }

    // Constraint values, ordering: [ball envelope; link_i; abs+_i; abs-_i; robust rows].
    void constraints(const std::vector<double>& v, std::vector<double>& out) const {
        const double* x = v.data();
        const double* b = v.data() + n;
        const double* s = v.data() + 2 * n;
        const double* t = v.data() + 3 * n;
        out.resize(mc);
        out[0] = kern::dot({s, n}, {s, n}) - p.gamma;
        for (std::size_t i = 0; i < n; ++i) {
            out[1 + i] = b[i] + t[i] - s[i];
            out[1 + n + i] = (x[i] - p.x_ref[i]) - t[i];
            out[1 + 2 * n + i] = -(x[i] - p.x_ref[i]) - t[i];
        }
        for (std::size_t j = 0; j < c; ++j) {
            const auto d = p.d_row(j);
            double m = kern::dot(d, {x, n}) - p.e[j];
            m += kern::dot({abs_row_sum.data() + j * n, n}, {b, n});
            out[1 + 3 * n + j] = m;
        }
    }

    void objective_grad(const std::vector<double>& v, std::vector<double>& g) const {
        g.assign(4 * n, 0.0);
        const double* x = v.data();
        const double* b = v.data() + n;
        if (proximity) {
            for (std::size_t i = 0; i < n; ++i) {
                g[i] = x[i] - target->x[i];
                g[n + i] = b[i] - target->beta[i];
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                g[i] = p.epsilon_x * x[i];
                g[n + i] = p.weights[i] * (-1.0 + p.epsilon_beta * b[i]);
            }
        }
    }

    double objective(const std::vector<double>& v) const {
        Decision d = decision(v);
        if (proximity) {
            return 0.5 * (kern::sumsq_diff(d.x, target->x) +
                          kern::sumsq_diff(d.beta, target->beta));
        }
        return eval_objective(p, d);
    }

    // g += sum_k mult[k] * grad c_k(v)
    void add_constraint_grads(const std::vector<double>& v,
                              const std::vector<double>& mult,
                              std::vector<double>& g) const {
        const double* s = v.data() + 2 * n;
        if (mult[0] != 0.0) {
            for (std::size_t i = 0; i < n; ++i) g[2 * n + i] += mult[0] * 2.0 * s[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double ml = mult[1 + i];
            const double mp = mult[1 + n + i];
            const double mm = mult[1 + 2 * n + i];
            g[n + i] += ml;
            g[3 * n + i] += ml - mp - mm;
            g[2 * n + i] -= ml;
            g[i] += mp - mm;
        }
        for (std::size_t j = 0; j < c; ++j) {
            const double mj = mult[1 + 3 * n + j];
            if (mj == 0.0) continue;
            kern::axpy(mj, p.d_row(j), {g.data(), n});
            kern::axpy(mj, {abs_row_sum.data() + j * n, n}, {g.data() + n, n});
        }
    }

    void project(std::vector<double>& v) const {
        for (std::size_t i = 0; i < 4 * n; ++i)
            v[i] = std::clamp(v[i], lo[i], hi[i]);
    }

    Decision decision(const std::vector<double>& v) const {
        Decision d;
        d.x.assign(v.begin(), v.begin() + n);
        d.beta.assign(v.begin() + n, v.begin() + 2 * n);
        return d;
    }

    double kkt_residual(const std::vector<double>& v,
                        const std::vector<double>& lambda) const {
        std::vector<double> cv, g;
        constraints(v, cv);
        double viol = 0.0, comp = 0.0;
        for (std::size_t k = 0; k < mc; ++k) {
            viol = std::max(viol, cv[k]);
            comp = std::max(comp, std::abs(lambda[k] * cv[k]));
        }
        objective_grad(v, g);
        add_constraint_grads(v, lambda, g);
        double pg = 0.0;
        for (std::size_t i = 0; i < 4 * n; ++i) {
            const double stepped = std::clamp(v[i] - g[i], lo[i], hi[i]);
            const double r = v[i] - stepped;
            pg += r * r;
        }
        return std::max({viol, std::sqrt(pg), comp});
    }
};

// Minimal uniform shrink of beta restoring a nonpositive closed-form worst
// margin; 20 bisection rounds per the two-tier tolerance scheme. When the
// nominal x is itself marginally infeasible (first-order solver residue),
// beta shrink cannot go below that level, so the shrink targets it instead
// of collapsing the radii.
Decision polish_feasible(const FlexProblem& p, Decision d) {
    for (double& b : d.beta) b = std::max(b, 0.0);
    const double full = worst_case_margin(p, d);
    if (full <= 0.0) return d;
    Decision trial = d;
    auto margin_at = [&](double sigma) {
        for (std::size_t i = 0; i < d.size(); ++i) trial.beta[i] = sigma * d.beta[i];
        return worst_case_margin(p, trial);
    };
    const double target = std::max(0.0, margin_at(0.0));
    if (full <= target) return d; // beta contributes nothing repairable
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 20; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (margin_at(mid) <= target) lo = mid; else hi = mid;
    }
    margin_at(lo);
    return trial;
}

// Augmented-Lagrangian outer loop with an accelerated projected-gradient
// inner solve. The inner objective is smooth:
//   F(v) = f(v) + (1/(2 rho)) sum_j (max(0, lambda_j + rho c_j(v))^2 - lambda_j^2)
// whose gradient uses the clipped shifted multipliers; outer steps are the
// classical clipped dual ascent lambda <- clip(lambda + rho c(v)).
SolveReport run_solver(const ReformulatedProgram& prog, const SolveSettings& st) {
    prog.problem.validate();
    Workspace w(prog, st.beta_cap);
    const std::size_t n = w.n;

    std::vector<double> v(4 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = prog.proximity ? prog.y_target.x[i] : w.p.x_ref[i];
        v[n + i] = prog.proximity ? std::max(prog.y_target.beta[i], 0.0) : 0.0;
    }
    w.project(v);
    for (std::size_t i = 0; i < n; ++i) {
        v[3 * n + i] = std::abs(v[i] - w.p.x_ref[i]);
        v[2 * n + i] = v[n + i] + v[3 * n + i];
    }
    w.project(v);

    const double lf = prog.proximity
                          ? 1.0
                          : std::max(w.p.epsilon_x, [&] {
                                double m = 0.0;
                                for (std::size_t i = 0; i < n; ++i)
                                    m = std::max(m, w.p.weights[i] * w.p.epsilon_beta);
                                return m;
                            }());

    std::vector<double> lambda(w.mc, 0.0), cv(w.mc), shifted(w.mc), grad;
    std::vector<double> y = v, v_prev = v, v_next(4 * n);

    double rho = st.rho;
    SolveReport rep;
    rep.converged = false;

    std::size_t spent = 0;
    double prev_viol = std::numeric_limits<double>::infinity();
    const std::size_t max_outer = 80;

    for (std::size_t outer = 0; outer < max_outer && spent < st.max_iters; ++outer) {
        // inner accelerated descent on F(., lambda)
        const double inner_tol =
            std::max(0.25 * st.tol, 1e-2 * std::pow(0.5, double(outer)));
        const std::size_t budget =
            std::min<std::size_t>(st.max_iters - spent, 20000);
        y = v;
        v_prev = v;
        double t_mom = 1.0;
        for (std::size_t it = 0; it < budget; ++it) {
            ++spent;
            w.constraints(y, cv);
            double lam_q = 0.0;
            for (std::size_t j = 0; j < w.mc; ++j) {
                shifted[j] = std::clamp(lambda[j] + rho * cv[j], 0.0, st.lambda_cap);
                if (j == 0) lam_q = shifted[j];
            }
            const double lcur = lf + 2.0 * lam_q + rho * w.jj_bound;
            const double tau = 1.0 / lcur;
            w.objective_grad(y, grad);
            w.add_constraint_grads(y, shifted, grad);
            for (std::size_t i = 0; i < 4 * n; ++i) v_next[i] = y[i] - tau * grad[i];
            w.project(v_next);

            // gradient restart keeps the momentum honest on the boxes
            double restart_dot = 0.0, step2 = 0.0;
            for (std::size_t i = 0; i < 4 * n; ++i) {
                restart_dot += grad[i] * (v_next[i] - v[i]);
                const double s = v_next[i] - v[i];
                step2 += s * s;
            }
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
            const double mom = restart_dot > 0.0 ? 0.0 : (t_mom - 1.0) / t_next;
            v_prev = v;
            v = v_next;
            for (std::size_t i = 0; i < 4 * n; ++i)
                y[i] = v[i] + mom * (v[i] - v_prev[i]);
            t_mom = restart_dot > 0.0 ? 1.0 : t_next;

            if ((it + 1) % 25 == 0 || std::sqrt(step2) <= inner_tol * tau) {
                // scaled projected-gradient norm at v
                w.constraints(v, cv);
                for (std::size_t j = 0; j < w.mc; ++j)
                    shifted[j] = std::clamp(lambda[j] + rho * cv[j], 0.0, st.lambda_cap);
                w.objective_grad(v, grad);
                w.add_constraint_grads(v, shifted, grad);
                double pg = 0.0;
                for (std::size_t i = 0; i < 4 * n; ++i) {
                    const double stepped = std::clamp(v[i] - grad[i], w.lo[i], w.hi[i]);
                    pg += (v[i] - stepped) * (v[i] - stepped);
                }
                if (std::sqrt(pg) <= inner_tol) break;
            }
        }

        w.constraints(v, cv);
        const double kkt = w.kkt_residual(v, lambda);
        if (kkt <= st.tol) {
            rep.converged = true;
            break;
        }
        double viol = 0.0;
        for (double c : cv) viol = std::max(viol, c);
        for (std::size_t j = 0; j < w.mc; ++j)
            lambda[j] = std::clamp(lambda[j] + rho * cv[j], 0.0, st.lambda_cap);
        if (viol > 0.25 * prev_viol && viol > st.tol) rho = std::min(rho * 4.0, 1e6);
        prev_viol = viol;
    }

    rep.iterations = spent;
    rep.kkt_residual = w.kkt_residual(v, lambda);
    rep.decision = polish_feasible(w.p, w.decision(v));
    rep.objective_value = w.objective([&] {
        std::vector<double> out = v;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = rep.decision.x[i];
            out[n + i] = rep.decision.beta[i];
        }
        return out;
    }());
    return rep;
}

} // namespace

ReformulatedProgram build_reformulation(const FlexProblem& p) {
    p.validate();
    ReformulatedProgram prog;
    prog.problem = p;
    prog.proximity = false;
    return prog;
}

SolveReport solve_reformulation(const ReformulatedProgram& prog,
                                const SolveSettings& settings) {
    return run_solver(prog, settings);
}

SolveReport guard_project(const FlexProblem& p, const Decision& y_T,
                          const SolveSettings& settings) {
    if (y_T.x.size() != p.n || y_T.beta.size() != p.n)
        throw std::invalid_argument("guard_project: dimension mismatch");
    ReformulatedProgram prog = build_reformulation(p);
    prog.proximity = true;
    prog.y_target = y_T;
    return run_solver(prog, settings);
}

Decision inner_round(const Decision& d, double resolution) {
    if (resolution <= 0.0)
        throw std::invalid_argument("inner_round: resolution must be positive");
    Decision out = d;
    for (double& b : out.beta) {
        const double q = b / resolution;
        b = std::floor(q + 1e-9) * resolution;
        if (b < 0.0) b = 0.0;
    }
    return out;
}

} // namespace flexo
