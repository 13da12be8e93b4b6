#pragma once

// Scenario files fully determine every run: problem data, chance parameters,
// search and estimation regions, both response models, algorithm settings and
// one named seed per random stream. The on-disk format is JSON; the schema is
// documented in the README.

#include <cstdint>
#include <string>

#include "flexo/problem.hpp"
#include "flexo/response.hpp"
#include "flexo/saddle.hpp"

namespace flexo {

struct AlgorithmSettings {
    double eta = 0.05;
    double eta_ref = 0.005;     // step size for the reference fixed-point run
    std::size_t iters = 10000;  // B-PD / MS-PD trace length
    std::size_t realizations = 50;
    std::size_t T = 500;        // Flex-O MS-PD budget
    bool guard = true;
    bool round = false;
    double resolution = 0.1;
    std::size_t quad_nodes = 64;
    std::size_t cv_samples = 10000;
    std::size_t cv_window = 100;
    double ref_tol = 1e-10;
    std::size_t ref_max_iters = 1000000;
    double solver_tol = 1e-6;
    std::size_t solver_max_iters = 200000;
};

struct EstimationSettings {
    std::size_t pairs = 4000;
    std::size_t sigma_points = 64;
    std::size_t sigma_draws = 256;
    std::size_t b_points = 200;
    std::size_t b_draws = 64;
    SearchRegion region; // usually tighter than the search region
};

struct Seeds {
    std::uint64_t weights = 1;
    std::uint64_t x_ref = 2;
    std::uint64_t noise = 3;      // Monte Carlo expectation / CV sampling
    std::uint64_t bpd = 4;        // per-realization streams fork from this
    std::uint64_t estimators = 5;
};

struct Scenario {
    std::string name = "scenario";
    FlexProblem problem;
    ChanceParams chance;
    SearchRegion region;
    ResponseModel true_model;
    ResponseModel ms_model;
    AlgorithmSettings algo;
    EstimationSettings est;
    Seeds seeds;

    void validate() const; // throws std::invalid_argument
};

// One-sided adjacent-difference corridor rows: row j has +1 at j, -1 at j+1.
// The two-sided variant adds the mirrored rows.
void build_corridor(FlexProblem& p, double bound, bool two_sided);

// The n=7 instance family: weights ~ U(0.1, 1), x_ref ~ N(19.5, 1),
// gamma = 2n, one-sided corridor with unit bounds, band-reaction true model
// against a deterministic linear-pull misspecified model.
Scenario generate_example_scenario(std::uint64_t seed);

Scenario load_scenario(const std::string& path);       // throws on parse errors
void save_scenario(const Scenario& s, const std::string& path);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

} // namespace flexo
