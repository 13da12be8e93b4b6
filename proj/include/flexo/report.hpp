#pragma once

// Trace CSV and solution report emission. All numbers in the human-readable
// section reappear at full precision in the machine-readable JSON block, and
// identical inputs produce byte-identical files.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flexo/pipeline.hpp"
#include "flexo/saddle.hpp"

namespace flexo {

// Columns: iter, dist_to_ref, objective, cv_estimate.
void write_trace_csv(const IterateTrace& trace, const std::string& path);

// Aggregated realizations; columns: iter, dist_mean, dist_sd.
void write_aggregate_trace_csv(const std::vector<double>& dist_mean,
                               const std::vector<double>& dist_sd,
                               const std::string& path);

struct ParsedCsv {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

ParsedCsv read_csv(const std::string& path);

struct AlgorithmSolution {
    std::string algorithm;
    Decision decision;
    double objective = 0.0;
    std::optional<double> cv;
    std::optional<double> cv_sd;        // spread over realizations, when aggregated
    std::optional<bool> robust_feasible;
};

struct ExperimentReport {
    std::string scenario_name;
    std::string command;
    std::vector<AlgorithmSolution> solutions;
    std::vector<UserInterval> intervals;           // for flexo runs
    std::optional<ConstantsReport> constants;      // for bounds runs
    std::optional<ConvergenceBounds> bounds;       // at the scenario step size
    double bounds_eta = 0.0;
    std::vector<std::string> trace_files;
    std::vector<std::string> notes;
};

void write_solution_report(const ExperimentReport& rep, const std::string& path);

// Re-parses the machine-readable block; used by round-trip checks.
ExperimentReport parse_solution_report(const std::string& path);

std::string format_full(double v); // %.17g, shared by every writer

} // namespace flexo
