#pragma once

// Experiment orchestration: dispatches a scenario to the named algorithm,
// writes trace CSVs and the solution report into the output directory, and
// maps failures to the CLI exit-code contract (0 ok, 2 invalid scenario,
// 3 non-convergence, 4 infeasibility found by check).

#include <cstdint>
#include <optional>
#include <string>

#include "flexo/report.hpp"
#include "flexo/scenario.hpp"

namespace flexo {

enum class Command { robust, bpd, mspd, flexo, reference, bounds, check, gen_example };

std::optional<Command> command_from_name(const std::string& name);

struct ExperimentOverrides {
    std::optional<std::uint64_t> seed; // re-derives every named stream
    std::optional<std::size_t> iters;
    std::optional<std::size_t> realizations;
    std::optional<std::size_t> T;
    std::string decision_path; // for check
};

struct ExperimentOutcome {
    int exit_code = 0;
    std::string report_path;
    std::vector<std::string> trace_paths; // absolute; the report keeps file names
    ExperimentReport report;
};

ExperimentOutcome run_experiment(const Scenario& scenario, Command which,
                                 const std::string& out_dir,
                                 const ExperimentOverrides& overrides = {});

} // namespace flexo
