#include "flexo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "flexo/estimators.hpp"
#include "flexo/pipeline.hpp"
#include "flexo/robust.hpp"

namespace flexo {

namespace {

namespace fs = std::filesystem;

std::string join_path(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

Scenario with_overrides(const Scenario& in, const ExperimentOverrides& ov) {
    Scenario s = in;
    if (ov.seed) {
        s.seeds.weights = mix_seed(*ov.seed, 1);
        s.seeds.x_ref = mix_seed(*ov.seed, 2);
        s.seeds.noise = mix_seed(*ov.seed, 3);
        s.seeds.bpd = mix_seed(*ov.seed, 4);
        s.seeds.estimators = mix_seed(*ov.seed, 5);
    }
    if (ov.iters) s.algo.iters = *ov.iters;
    if (ov.realizations) s.algo.realizations = *ov.realizations;
    if (ov.T) s.algo.T = *ov.T;
    return s;
}

SolveSettings solver_settings(const Scenario& s) {
    SolveSettings st;
    st.tol = s.algo.solver_tol;
    st.max_iters = s.algo.solver_max_iters;
    st.beta_cap = s.region.beta_hi;
    return st;
}

double report_cv(const Scenario& s, std::span<const Decision> window) {
    Rng rng(mix_seed(s.seeds.noise, 0xCF));
    return constraint_violation_metric(s.problem, window, s.true_model,
                                       s.algo.cv_samples, rng, s.algo.quad_nodes);
}

SaddlePoint robust_warm_start(const Scenario& s) {
    const auto rep = solve_reformulation(build_reformulation(s.problem), solver_settings(s));
    SaddlePoint start;
    start.y = rep.decision;
    start.lambda.assign(s.problem.constraint_count(), 0.0);
    return start;
}

SaddlePoint reference_point(const Scenario& s) {
    return compute_reference_equilibrium(s.problem, s.chance, s.region, s.true_model,
                                         s.algo.eta_ref, s.algo.ref_tol,
                                         s.algo.ref_max_iters, s.algo.quad_nodes);
}

AlgorithmSolution make_solution(const Scenario& s, const std::string& name,
                                const Decision& d, bool with_cv = true) {
    AlgorithmSolution sol;
    sol.algorithm = name;
    sol.decision = d;
    sol.objective = eval_objective(s.problem, d);
    if (with_cv) {
        std::array<Decision, 1> w{d};
        sol.cv = report_cv(s, w);
    }
    return sol;
}

ExperimentOutcome run_robust(const Scenario& s, const std::string& out_dir) {
    ExperimentOutcome out;
    const auto prog = build_reformulation(s.problem);
    const auto rep = solve_reformulation(prog, solver_settings(s));
    auto cert = vertex_feasibility_oracle(s.problem, rep.decision, 1e-6);

    auto sol = make_solution(s, "robust", rep.decision);
    sol.robust_feasible = cert.feasible;
    out.report.solutions.push_back(sol);
    out.report.notes.push_back("kkt_residual = " + format_full(rep.kkt_residual) +
                               ", iterations = " + std::to_string(rep.iterations));
    if (!rep.converged) {
        out.report.notes.push_back("solver did not reach tolerance; decision polished");
        out.exit_code = 3;
    }
    return out;
}

ExperimentOutcome run_reference(const Scenario& s, const std::string& out_dir) {
    ExperimentOutcome out;
    const SaddlePoint ref = reference_point(s);
    auto sol = make_solution(s, "reference", ref.y);
    out.report.solutions.push_back(sol);
    std::string lam = "lambda_bar = [";
    for (std::size_t j = 0; j < ref.lambda.size(); ++j) {
        if (j) lam += ", ";
        lam += format_full(ref.lambda[j]);
    }
    out.report.notes.push_back(lam + "]");
    return out;
}

ExperimentOutcome run_bpd(const Scenario& s, const std::string& out_dir) {
    ExperimentOutcome out;
    const SaddlePoint ref = reference_point(s);

    const std::size_t R = s.algo.realizations;
    const std::size_t K = s.algo.iters;
    std::vector<double> mean(K + 1, 0.0), m2(K + 1, 0.0);
    std::vector<double> cvs;
    Decision mean_final;
    mean_final.x.assign(s.problem.n, 0.0);
    mean_final.beta.assign(s.problem.n, 0.0);

    RunOptions opts;
    opts.eta = s.algo.eta;
    opts.iters = K;
    opts.quad_nodes = s.algo.quad_nodes;
    opts.keep_window = s.algo.cv_window;
    opts.reference = &ref;
    opts.start = robust_warm_start(s);

    // Realizations run concurrently on independent streams; aggregation
    // happens afterwards in realization order, so outputs stay deterministic.
    std::vector<IterateTrace> traces(R);
    {
        std::atomic<std::size_t> next{0};
        const std::size_t workers =
            std::max<std::size_t>(1, std::min<std::size_t>(
                                         std::thread::hardware_concurrency(), R));
        auto work = [&] {
            for (std::size_t r = next.fetch_add(1); r < R; r = next.fetch_add(1)) {
                Rng rng(mix_seed(s.seeds.bpd, r));
                traces[r] = bpd_run(s.problem, s.chance, s.region, s.true_model,
                                    opts, rng);
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w + 1 < workers; ++w) pool.emplace_back(work);
        work();
        for (auto& t : pool) t.join();
    }

    for (std::size_t r = 0; r < R; ++r) {
        const auto& trace = traces[r];
        for (std::size_t k = 0; k <= K; ++k) {
            const double d = trace.records[k].dist_to_ref;
            const double delta = d - mean[k];
            mean[k] += delta / double(r + 1);
            m2[k] += delta * (d - mean[k]);
        }
        cvs.push_back(report_cv(s, trace.window));
        for (std::size_t i = 0; i < s.problem.n; ++i) {
            mean_final.x[i] += trace.final_point.y.x[i];
            mean_final.beta[i] += trace.final_point.y.beta[i];
        }
    }
    for (std::size_t i = 0; i < s.problem.n; ++i) {
        mean_final.x[i] /= double(R);
        mean_final.beta[i] /= double(R);
    }
    std::vector<double> sd(K + 1, 0.0);
    if (R > 1)
        for (std::size_t k = 0; k <= K; ++k) sd[k] = std::sqrt(m2[k] / double(R - 1));

    const std::string trace_path = join_path(out_dir, "bpd_trace.csv");
    write_aggregate_trace_csv(mean, sd, trace_path);
    out.trace_paths.push_back(trace_path);
    out.report.trace_files.push_back("bpd_trace.csv");

    AlgorithmSolution sol;
    sol.algorithm = "bpd";
    sol.decision = mean_final;
    sol.objective = eval_objective(s.problem, mean_final);
    double cv_mean = 0.0;
    for (double c : cvs) cv_mean += c;
    cv_mean /= double(cvs.size());
    double cv_var = 0.0;
    for (double c : cvs) cv_var += (c - cv_mean) * (c - cv_mean);
    sol.cv = cv_mean;
    if (cvs.size() > 1) sol.cv_sd = std::sqrt(cv_var / double(cvs.size() - 1));
    out.report.solutions.push_back(sol);
    out.report.notes.push_back("mean/sd over " + std::to_string(R) +
                               " realizations; distances to the reference equilibrium");
    return out;
}

ExperimentOutcome run_mspd(const Scenario& s, const std::string& out_dir) {
    ExperimentOutcome out;
    const SaddlePoint ref = reference_point(s);

    RunOptions opts;
    opts.eta = s.algo.eta;
    opts.iters = s.algo.iters;
    opts.quad_nodes = s.algo.quad_nodes;
    opts.compute_cv = true;
    opts.keep_window = s.algo.cv_window;
    opts.reference = &ref;
    opts.start = robust_warm_start(s);

    const auto trace = mspd_run(s.problem, s.chance, s.region, s.ms_model, opts);
    const std::string trace_path = join_path(out_dir, "mspd_trace.csv");
    write_trace_csv(trace, trace_path);
    out.trace_paths.push_back(trace_path);
    out.report.trace_files.push_back("mspd_trace.csv");

    auto sol = make_solution(s, "mspd", trace.final_point.y, false);
    std::vector<Decision> window = trace.window;
    Rng rng(mix_seed(s.seeds.noise, 0xCF));
    sol.cv = constraint_violation_metric(s.problem, window, s.true_model,
                                         s.algo.cv_samples, rng, s.algo.quad_nodes);
    out.report.solutions.push_back(sol);
    return out;
}

ExperimentOutcome run_flexo_cmd(const Scenario& s, const std::string& out_dir) {
    ExperimentOutcome out;
    const SaddlePoint ref = reference_point(s);

    PipelineConfig cfg;
    cfg.T = s.algo.T;
    cfg.guard = s.algo.guard;
    cfg.round = s.algo.round;
    cfg.resolution = s.algo.resolution;
    cfg.eta = s.algo.eta;
    cfg.chance = s.chance;
    cfg.region = s.region;
    cfg.model_ms = s.ms_model;
    cfg.quad_nodes = s.algo.quad_nodes;
    cfg.solver = solver_settings(s);
    cfg.reference = &ref;

    const auto res = run_flexo(s.problem, cfg);

    const std::string trace_path = join_path(out_dir, "flexo_trace.csv");
    write_trace_csv(res.trace, trace_path);
    out.trace_paths.push_back(trace_path);
    out.report.trace_files.push_back("flexo_trace.csv");

    auto robust_sol = make_solution(s, "robust warm start", res.assignment.robust_stage.decision);
    robust_sol.robust_feasible = true;
    out.report.solutions.push_back(robust_sol);

    auto sol = make_solution(s, "flexo(T=" + std::to_string(cfg.T) + ")",
                             res.assignment.decision);
    if (res.assignment.certificate)
        sol.robust_feasible = res.assignment.certificate->feasible;
    out.report.solutions.push_back(sol);
    out.report.intervals = emit_user_sets(res.assignment);
    std::string stages = "stages:";
    for (const auto& st : res.assignment.stages_run) stages += " " + st;
    out.report.notes.push_back(stages);
    if (!res.assignment.robust_stage.converged) out.exit_code = 3;
    return out;
}

ExperimentOutcome run_bounds(const Scenario& s, const std::string& out_dir) {
    ExperimentOutcome out;
    Rng rng(mix_seed(s.seeds.estimators, 0xE5));

    ConstantsReport c;
    const auto mul = estimate_mu_L(s.problem, s.chance, s.est.region, s.est.pairs, rng);
    c.mu = mul.mu;
    c.L = mul.L;
    Rng eps_rng = rng.fork(1);
    const auto eps = estimate_lipschitz_eps(s.true_model, s.est.region, s.est.pairs, eps_rng);
    c.eps = eps.slope_bound;
    c.eps_sampled = eps.sampled;
    Rng sig_rng = rng.fork(2);
    c.sigma = estimate_sigma(s.problem, s.chance, s.true_model, s.est.region,
                             s.est.sigma_points, s.est.sigma_draws, sig_rng);
    Rng b_rng = rng.fork(3);
    const auto b = estimate_misspecification_bound(s.true_model, s.ms_model, s.est.region,
                                                   s.est.b_points, s.est.b_draws, b_rng);
    c.B = b.coupling;
    c.B_support_cap = b.support_cap;
    c.eta_range = step_size_range(c.mu, c.L, c.eps);

    out.report.constants = c;
    out.report.bounds = convergence_bounds(c, s.algo.eta);
    out.report.bounds_eta = s.algo.eta;
    if (!out.report.bounds->valid)
        out.report.notes.push_back(
            "rho >= 1 at the scenario step size: the contraction premise fails on "
            "this instance and the error-ball bounds do not apply");
    return out;
}

ExperimentOutcome run_check(const Scenario& s, const std::string& out_dir,
                            const ExperimentOverrides& ov) {
    ExperimentOutcome out;
    if (ov.decision_path.empty())
        throw std::invalid_argument("check: requires --decision <file>");
    std::ifstream in(ov.decision_path);
    if (!in)
        throw std::invalid_argument("check: cannot open '" + ov.decision_path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument(std::string("check: bad decision file: ") + ex.what());
    }
    Decision d;
    d.x = j.at("x").get<std::vector<double>>();
    d.beta = j.at("beta").get<std::vector<double>>();
    if (d.x.size() != s.problem.n || d.beta.size() != s.problem.n)
        throw std::invalid_argument("check: decision size does not match the scenario");

    const auto cert = vertex_feasibility_oracle(s.problem, d, 1e-6);
    auto sol = make_solution(s, "check", d);
    sol.robust_feasible = cert.feasible;
    out.report.solutions.push_back(sol);
    out.report.notes.push_back("worst_margin = " + format_full(cert.worst_margin));
    out.exit_code = cert.feasible ? 0 : 4;
    return out;
}

} // namespace

std::optional<Command> command_from_name(const std::string& name) {
    if (name == "robust") return Command::robust;
    if (name == "bpd") return Command::bpd;
    if (name == "mspd") return Command::mspd;
    if (name == "flexo") return Command::flexo;
    if (name == "reference") return Command::reference;
    if (name == "bounds") return Command::bounds;
    if (name == "check") return Command::check;
    if (name == "gen-example") return Command::gen_example;
    return std::nullopt;
}

ExperimentOutcome run_experiment(const Scenario& scenario, Command which,
                                 const std::string& out_dir,
                                 const ExperimentOverrides& overrides) {
    const Scenario s = with_overrides(scenario, overrides);
    s.validate();
    fs::create_directories(out_dir);

    ExperimentOutcome out;
    std::string cmd_name;
    try {
        switch (which) {
        case Command::robust:    cmd_name = "robust";    out = run_robust(s, out_dir); break;
        case Command::bpd:       cmd_name = "bpd";       out = run_bpd(s, out_dir); break;
        case Command::mspd:      cmd_name = "mspd";      out = run_mspd(s, out_dir); break;
        case Command::flexo:     cmd_name = "flexo";     out = run_flexo_cmd(s, out_dir); break;
        case Command::reference: cmd_name = "reference"; out = run_reference(s, out_dir); break;
        case Command::bounds:    cmd_name = "bounds";    out = run_bounds(s, out_dir); break;
        case Command::check:     cmd_name = "check";     out = run_check(s, out_dir, overrides); break;
        case Command::gen_example:
            throw std::invalid_argument("gen-example is handled by the CLI directly");
        }
    } catch (const std::runtime_error& ex) {
        // non-convergence of a stage
        out.report.scenario_name = s.name;
        out.report.command = cmd_name;
        out.report.notes.push_back(std::string("failed: ") + ex.what());
        out.exit_code = 3;
        out.report_path = join_path(out_dir, cmd_name + "_report.txt");
        write_solution_report(out.report, out.report_path);
        return out;
    }
    out.report.scenario_name = s.name;
    out.report.command = cmd_name;
    out.report_path = join_path(out_dir, cmd_name + "_report.txt");
    write_solution_report(out.report, out.report_path);
    return out;
}

} // namespace flexo
