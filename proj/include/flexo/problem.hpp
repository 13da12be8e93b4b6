#pragma once

// Data model for the shared-resource flexibility problem: a strongly convex
// cost over nominal decisions x and per-user radii beta, a norm-ball
// constraint around reference levels, and affine corridor rows. Constraint
// ordering is fixed everywhere as [ball; affine rows in D order].

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flexo {

struct Decision {
    std::vector<double> x;    // nominal decision per user
    std::vector<double> beta; // flexibility radius per user, >= 0

    std::size_t size() const { return x.size(); }
};

class FlexProblem {
public:
    std::size_t n = 0;          // number of users
    double epsilon_x = 0.0;     // curvature of the nominal cost
    double epsilon_beta = 0.0;  // curvature of the flexibility cost
    std::vector<double> weights;
    std::vector<double> x_ref;
    double gamma = 0.0;         // ball radius squared
    std::vector<double> D;      // c x n affine rows, row-major
    std::vector<double> e;      // affine bounds, size c

    std::size_t affine_rows() const { return e.size(); }
    std::size_t constraint_count() const { return 1 + e.size(); }

    std::span<const double> d_row(std::size_t j) const {
        return std::span<const double>(D.data() + j * n, n);
    }

    // Throws std::invalid_argument on dimension or sign violations.
    void validate() const;
};

struct ConstraintValues {
    // values[0] = ||v - x_ref||^2 - gamma, values[1..] = d_j . v - e_j
    std::vector<double> values;

    double max_value() const;
    bool feasible(double tol) const { return max_value() <= tol; }
};

struct RobustCertificate {
    bool feasible = false;
    std::vector<int> worst_vertex; // sign pattern in {-1,+1}^n
    double worst_margin = 0.0;     // max over vertices and constraints
};

// v_i = x_i + beta_i * z_i for z in [-1,1]^n.
std::vector<double> realize(const Decision& d, std::span<const double> z);

// g(y) = eps_x/2 ||x||^2 + sum_i w_i (-beta_i + eps_beta/2 beta_i^2)
double eval_objective(const FlexProblem& p, const Decision& d);

ConstraintValues eval_constraints(const FlexProblem& p, std::span<const double> v);

// Exact hyperbox worst case of an affine row: d.x - e + sum_i |d_i| beta_i.
double worst_case_affine_margin(std::span<const double> d_row, double e_val,
                                const Decision& d);

// s_i = beta_i + |x_i - x_ref_i|; ||s||^2 is the hyperbox maximum of
// ||v - x_ref||^2.
std::vector<double> worst_case_norm_envelope(const Decision& d,
                                             std::span<const double> x_ref);

// Worst constraint margin of the closed-form envelopes over all constraints.
double worst_case_margin(const FlexProblem& p, const Decision& d);

// Enumerates all 2^n vertices of the hyperbox. Cost is m * 2^n constraint
// evaluations; refuses n above the cap.
RobustCertificate vertex_feasibility_oracle(const FlexProblem& p, const Decision& d,
                                            double tol, std::size_t n_cap = 20);

} // namespace flexo
