// flexo: flexible-optimization experiment runner.
//
// Subcommands: robust, bpd, mspd, flexo, reference, bounds, check, gen-example.
// Exit codes: 0 success, 2 invalid scenario or arguments, 3 non-convergence,
// 4 infeasibility detected by check.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flexo/experiment.hpp"
#include "flexo/scenario.hpp"

namespace {

struct CliArgs {
    std::string scenario_path;
    std::string out_dir = "out";
    std::string decision_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> iters;
    std::optional<std::size_t> realizations;
    std::optional<std::size_t> T;
};

void add_common(CLI::App* cmd, CliArgs& args, bool needs_scenario = true) {
    auto* opt = cmd->add_option("--scenario", args.scenario_path, "scenario JSON file");
    if (needs_scenario) opt->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", [&args](const CLI::results_t& r) {
        args.seed = std::stoull(r[0]);
        return true;
    }, "override every scenario seed stream");
    cmd->add_option("--iters", [&args](const CLI::results_t& r) {
        args.iters = std::stoull(r[0]);
        return true;
    }, "override the iteration budget");
    cmd->add_option("--realizations", [&args](const CLI::results_t& r) {
        args.realizations = std::stoull(r[0]);
        return true;
    }, "override the number of B-PD realizations");
    cmd->add_option("--T", [&args](const CLI::results_t& r) {
        args.T = std::stoull(r[0]);
        return true;
    }, "override the Flex-O MS-PD budget");
}

int run_command(flexo::Command which, const CliArgs& args) {
    flexo::Scenario scenario = flexo::load_scenario(args.scenario_path);
    flexo::ExperimentOverrides ov;
    ov.seed = args.seed;
    ov.iters = args.iters;
    ov.realizations = args.realizations;
    ov.T = args.T;
    ov.decision_path = args.decision_path;
    const auto outcome = flexo::run_experiment(scenario, which, args.out_dir, ov);
    std::cout << "report: " << outcome.report_path << "\n";
    for (const auto& t : outcome.trace_paths) std::cout << "trace:  " << t << "\n";
    for (const auto& n : outcome.report.notes) std::cout << "note:   " << n << "\n";
    return outcome.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flexible optimization: robust intervals plus decision-dependent primal-dual"};
    app.require_subcommand(1);

    CliArgs args;

    auto* robust = app.add_subcommand("robust", "solve the worst-case reformulation");
    add_common(robust, args);
    auto* bpd = app.add_subcommand("bpd", "stochastic primal-dual realizations");
    add_common(bpd, args);
    auto* mspd = app.add_subcommand("mspd", "model-based primal-dual run");
    add_common(mspd, args);
    auto* flexo_cmd = app.add_subcommand("flexo", "full warm-start/guard/round workflow");
    add_common(flexo_cmd, args);
    auto* reference = app.add_subcommand("reference", "true-model equilibrium point");
    add_common(reference, args);
    auto* bounds = app.add_subcommand("bounds", "estimate constants and error balls");
    add_common(bounds, args);
    auto* check = app.add_subcommand("check", "vertex-oracle feasibility of a decision");
    add_common(check, args);
    check->add_option("--decision", args.decision_path, "decision JSON file {x:[],beta:[]}")
        ->required();

    auto* gen = app.add_subcommand("gen-example", "generate the n=7 example scenario");
    std::uint64_t gen_seed = 0;
    std::string gen_out = "scenario.json";
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output scenario file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            const auto scenario = flexo::generate_example_scenario(gen_seed);
            flexo::save_scenario(scenario, gen_out);
            std::cout << "scenario: " << gen_out << "\n";
            return 0;
        }
        if (robust->parsed()) return run_command(flexo::Command::robust, args);
        if (bpd->parsed()) return run_command(flexo::Command::bpd, args);
        if (mspd->parsed()) return run_command(flexo::Command::mspd, args);
        if (flexo_cmd->parsed()) return run_command(flexo::Command::flexo, args);
        if (reference->parsed()) return run_command(flexo::Command::reference, args);
        if (bounds->parsed()) return run_command(flexo::Command::bounds, args);
        if (check->parsed()) return run_command(flexo::Command::check, args);
    } catch (const std::invalid_argument& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::runtime_error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 3;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 2;
}
