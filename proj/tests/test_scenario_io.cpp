#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <fstream>

#include "flexo/experiment.hpp"
#include "flexo/report.hpp"
#include "flexo/scenario.hpp"

using namespace flexo;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("flexo_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("example scenario matches the instance family") {
    const auto s = generate_example_scenario(42);
    CHECK(s.problem.n == 7);
    CHECK(s.problem.affine_rows() == 6);
    CHECK(s.problem.gamma == doctest::Approx(14.0));
    for (double e : s.problem.e) CHECK(e == doctest::Approx(1.0));
    for (double w : s.problem.weights) {
        CHECK(w >= 0.1);
        CHECK(w <= 1.0);
    }
    CHECK(s.true_model.noise_sd == doctest::Approx(std::sqrt(0.1)));
    CHECK(s.ms_model.deterministic());

    // determinism and seed sensitivity
    CHECK(scenario_to_json(generate_example_scenario(42)) == scenario_to_json(s));
    CHECK(scenario_to_json(generate_example_scenario(43)) != scenario_to_json(s));
}

TEST_CASE("scenario files round-trip") {
    TempDir tmp;
    const auto s = generate_example_scenario(7);
    const auto path = tmp.file("scenario.json");
    save_scenario(s, path);
    const auto back = load_scenario(path);
    CHECK(scenario_to_json(back) == scenario_to_json(s));

    // invalid content is rejected with an explanation
    const auto bad = tmp.file("bad.json");
    std::ofstream(bad) << "{ not json";
    CHECK_THROWS_AS(load_scenario(bad), std::invalid_argument);
    const auto missing = tmp.file("missing.json");
    std::ofstream(missing) << "{\"name\": \"x\"}";
    CHECK_THROWS_AS(load_scenario(missing), std::invalid_argument);
}

TEST_CASE("trace csv round-trips at full precision") {
    TempDir tmp;
    IterateTrace trace;
    for (std::size_t k = 0; k <= 10; ++k) {
        TraceRecord r;
        r.iter = k;
        r.dist_to_ref = std::sqrt(2.0) * double(k) / 7.0;
        r.objective = -1.0 / (double(k) + 3.0);
        r.cv = 0.023456789012345 * double(k);
        trace.records.push_back(r);
    }
    const auto path = tmp.file("trace.csv");
    write_trace_csv(trace, path);
    const auto parsed = read_csv(path);
    CHECK(parsed.columns ==
          std::vector<std::string>{"iter", "dist_to_ref", "objective", "cv_estimate"});
    REQUIRE(parsed.rows.size() == 11); // K = 10 gives 11 rows
    for (std::size_t k = 0; k <= 10; ++k) {
        CHECK(parsed.rows[k][0] == double(k));
        CHECK(parsed.rows[k][1] == trace.records[k].dist_to_ref); // %.17g is exact
        CHECK(parsed.rows[k][2] == trace.records[k].objective);
        CHECK(parsed.rows[k][3] == trace.records[k].cv);
    }

    IterateTrace empty;
    const auto epath = tmp.file("empty.csv");
    write_trace_csv(empty, epath);
    const auto eparsed = read_csv(epath);
    CHECK(eparsed.columns.size() == 4);
    CHECK(eparsed.rows.empty());
}

TEST_CASE("solution report machine block re-parses exactly") {
    TempDir tmp;
    ExperimentReport rep;
    rep.scenario_name = "unit";
    rep.command = "robust";
    AlgorithmSolution sol;
    sol.algorithm = "robust";
    sol.decision = Decision{{19.4321098765432109, 18.0}, {1.0, 0.4999999999999999}};
    rep.solutions.push_back(sol);

    const auto path = tmp.file("report.txt");
    rep.solutions[0].objective = -3.141592653589793;
    rep.solutions[0].cv = 0.023;
    rep.solutions[0].robust_feasible = true;
    write_solution_report(rep, path);
    const auto back = parse_solution_report(path);
    REQUIRE(back.solutions.size() == 1);
    CHECK(back.solutions[0].algorithm == "robust");
    CHECK(back.solutions[0].decision.x == rep.solutions[0].decision.x);
    CHECK(back.solutions[0].decision.beta == rep.solutions[0].decision.beta);
    CHECK(back.solutions[0].objective == rep.solutions[0].objective);
    CHECK(back.solutions[0].cv == rep.solutions[0].cv);
    CHECK(back.solutions[0].robust_feasible == rep.solutions[0].robust_feasible);

    // every human-readable number also appears in the machine block
    const auto text = slurp(path);
    CHECK(text.find("19.4") != std::string::npos);
    CHECK(text.find("=== machine-readable ===") != std::string::npos);
}

TEST_CASE("experiments write byte-identical outputs on repeat") {
    // a conditioned tiny scenario keeps this fast
    Scenario s = generate_example_scenario(7);
    s.algo.solver_max_iters = 30000;

    TempDir t1, t2;
    const auto a = run_experiment(s, Command::robust, t1.path.string());
    const auto b = run_experiment(s, Command::robust, t2.path.string());
    CHECK(a.exit_code == b.exit_code);
    CHECK(slurp(a.report_path) == slurp(b.report_path));
}

namespace {

// Tiny single-user scenario whose robust optimum is the analytic (20, 2).
Scenario tiny_scenario() {
    Scenario s;
    s.name = "tiny";
    s.problem.n = 1;
    s.problem.epsilon_x = 0.001;
    s.problem.epsilon_beta = 0.01;
    s.problem.weights = {1.0};
    s.problem.x_ref = {20.0};
    s.problem.gamma = 4.0;
    s.chance = ChanceParams{1.5, 0.2, 1.0};
    s.region.x_lo = {15.0};
    s.region.x_hi = {25.0};
    s.region.beta_lo = 0.0;
    s.region.beta_hi = 3.0;
    s.region.lambda_max = 1.0;
    ShiftRule r;
    r.kind = ShiftKind::constant;
    r.level = 0.1;
    s.true_model.rules = {r};
    s.true_model.noise_sd = 0.2;
    s.ms_model.rules = {r};
    s.ms_model.noise_sd = 0.0;
    s.est.region = s.region;
    return s;
}

} // namespace

TEST_CASE("robust experiment reproduces the analytic single-user optimum") {
    TempDir tmp;
    const auto s = tiny_scenario();
    const auto out = run_experiment(s, Command::robust, tmp.path.string());
    CHECK(out.exit_code == 0);
    REQUIRE(out.report.solutions.size() == 1);
    const auto& d = out.report.solutions[0].decision;
    CHECK(d.x[0] == doctest::Approx(20.0).epsilon(1e-3));
    CHECK(d.beta[0] == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(out.report.solutions[0].robust_feasible.value());
}

TEST_CASE("aggregated bpd trace has the documented shape") {
    TempDir tmp;
    Scenario s = generate_example_scenario(5);
    s.algo.iters = 40;
    s.algo.realizations = 3;
    s.algo.cv_samples = 500;
    s.algo.solver_max_iters = 60000;
    const auto out = run_experiment(s, Command::bpd, tmp.path.string());
    CHECK(out.exit_code == 0);
    REQUIRE(out.trace_paths.size() == 1);
    const auto parsed = read_csv(out.trace_paths[0]);
    CHECK(parsed.columns == std::vector<std::string>{"iter", "dist_mean", "dist_sd"});
    CHECK(parsed.rows.size() == 41); // K + 1 rows
    REQUIRE(out.report.solutions.size() == 1);
    CHECK(out.report.solutions[0].cv.has_value());
    CHECK(out.report.solutions[0].cv_sd.has_value());
}

TEST_CASE("check command classifies decisions through the vertex oracle") {
    TempDir tmp;
    const auto s = tiny_scenario();
    ExperimentOverrides ov;

    ov.decision_path = tmp.file("good.json");
    std::ofstream(ov.decision_path) << R"({"x": [20.0], "beta": [1.0]})";
    CHECK(run_experiment(s, Command::check, tmp.path.string(), ov).exit_code == 0);

    ov.decision_path = tmp.file("bad.json");
    std::ofstream(ov.decision_path) << R"({"x": [20.0], "beta": [3.0]})";
    CHECK(run_experiment(s, Command::check, tmp.path.string(), ov).exit_code == 4);

    ov.decision_path = tmp.file("missing.json");
    CHECK_THROWS_AS(run_experiment(s, Command::check, tmp.path.string(), ov),
                    std::invalid_argument);
}
