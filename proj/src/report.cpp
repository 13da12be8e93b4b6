#include "flexo/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace flexo {

namespace {

using nlohmann::json;

constexpr const char* kMachineMarker = "=== machine-readable ===";

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string vector_fixed(const std::vector<double>& v, int decimals) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format_fixed(v[i], decimals);
    }
    out += "]";
    return out;
}

json decision_to_json(const Decision& d) {
    json j;
    j["x"] = d.x;
    j["beta"] = d.beta;
    return j;
}

Decision decision_from_json(const json& j) {
    Decision d;
    d.x = j.at("x").get<std::vector<double>>();
    d.beta = j.at("beta").get<std::vector<double>>();
    return d;
}

void open_or_throw(std::ofstream& out, const std::string& path) {
    out.open(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
}

} // namespace

std::string format_full(double v) {
    char buf[64];
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_trace_csv(const IterateTrace& trace, const std::string& path) {
    std::ofstream out;
    open_or_throw(out, path);
    out << "iter,dist_to_ref,objective,cv_estimate\n";
    for (const auto& r : trace.records) {
        out << r.iter << ',' << format_full(r.dist_to_ref) << ','
            << format_full(r.objective) << ',' << format_full(r.cv) << '\n';
    }
}

void write_aggregate_trace_csv(const std::vector<double>& dist_mean,
                               const std::vector<double>& dist_sd,
                               const std::string& path) {
    if (dist_mean.size() != dist_sd.size())
        throw std::invalid_argument("aggregate trace: size mismatch");
    std::ofstream out;
    open_or_throw(out, path);
    out << "iter,dist_mean,dist_sd\n";
    for (std::size_t k = 0; k < dist_mean.size(); ++k) {
        out << k << ',' << format_full(dist_mean[k]) << ','
            << format_full(dist_sd[k]) << '\n';
    }
}

ParsedCsv read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    ParsedCsv out;
    std::string line;
    if (!std::getline(in, line)) return out;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) out.columns.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        out.rows.push_back(std::move(row));
    }
    return out;
}

void write_solution_report(const ExperimentReport& rep, const std::string& path) {
    std::ofstream out;
    open_or_throw(out, path);

    out << "scenario: " << rep.scenario_name << "\n";
    out << "command: " << rep.command << "\n\n";

    for (const auto& s : rep.solutions) {
        out << "[" << s.algorithm << "]\n";
        out << "  x    = " << vector_fixed(s.decision.x, 1) << "\n";
        out << "  beta = " << vector_fixed(s.decision.beta, 1) << "\n";
        out << "  objective = " << format_fixed(s.objective, 6) << "\n";
        if (s.cv) {
            out << "  <CV(z)> = " << format_fixed(*s.cv, 3);
            if (s.cv_sd) out << " (sd " << format_fixed(*s.cv_sd, 3) << ")";
            out << "\n";
        }
        if (s.robust_feasible)
            out << "  robust-feasible = " << (*s.robust_feasible ? "yes" : "no") << "\n";
        out << "\n";
    }

    if (!rep.intervals.empty()) {
        out << "[per-user intervals]\n";
        for (const auto& u : rep.intervals) {
            out << "  user " << u.user << ": [" << format_fixed(u.lo, 2) << ", "
                << format_fixed(u.hi, 2) << "]  (center " << format_fixed(u.center, 2)
                << ", radius " << format_fixed(u.radius, 2) << ")\n";
        }
        out << "\n";
    }

    if (rep.constants) {
        const auto& c = *rep.constants;
        out << "[estimated constants]\n";
        out << "  mu    = " << format_full(c.mu) << "\n";
        out << "  L     = " << format_full(c.L) << "  (sampled lower estimate)\n";
        out << "  eps   = " << format_full(c.eps) << "  (sampled " << format_full(c.eps_sampled)
            << ")\n";
        out << "  sigma = " << format_full(c.sigma) << "\n";
        out << "  B     = " << format_full(c.B) << "  (support cap "
            << format_full(c.B_support_cap) << ")\n";
        if (c.eta_range.valid)
            out << "  eta_max = " << format_full(c.eta_range.eta_max) << "\n";
        else
            out << "  eta_max = (empty range: eps L / mu >= 1)\n";
        if (rep.bounds) {
            out << "  at eta = " << format_full(rep.bounds_eta) << ":\n";
            out << "    rho = " << format_full(rep.bounds->rho)
                << (rep.bounds->valid ? "" : "  (>= 1, bounds do not apply)") << "\n";
            out << "    ball_stochastic = " << format_full(rep.bounds->ball_stochastic) << "\n";
            out << "    ball_model      = " << format_full(rep.bounds->ball_model) << "\n";
        }
        out << "\n";
    }

    if (!rep.trace_files.empty()) {
        out << "[traces]\n";
        for (const auto& t : rep.trace_files) out << "  " << t << "\n";
        out << "\n";
    }
    for (const auto& n : rep.notes) out << "note: " << n << "\n";
    if (!rep.notes.empty()) out << "\n";

    json j;
    j["scenario"] = rep.scenario_name;
    j["command"] = rep.command;
    json sols = json::array();
    for (const auto& s : rep.solutions) {
        json sj;
        sj["algorithm"] = s.algorithm;
        sj["decision"] = decision_to_json(s.decision);
        sj["objective"] = s.objective;
        if (s.cv) sj["cv"] = *s.cv;
        if (s.cv_sd) sj["cv_sd"] = *s.cv_sd;
        if (s.robust_feasible) sj["robust_feasible"] = *s.robust_feasible;
        sols.push_back(sj);
    }
    j["solutions"] = sols;
    if (!rep.intervals.empty()) {
        json arr = json::array();
        for (const auto& u : rep.intervals) {
            json uj;
            uj["user"] = u.user;
            uj["center"] = u.center;
            uj["radius"] = u.radius;
            uj["lo"] = u.lo;
            uj["hi"] = u.hi;
            arr.push_back(uj);
        }
        j["intervals"] = arr;
    }
    if (rep.constants) {
        const auto& c = *rep.constants;
        json cj;
        cj["mu"] = c.mu;
        cj["L"] = c.L;
        cj["eps"] = c.eps;
        cj["eps_sampled"] = c.eps_sampled;
        cj["sigma"] = c.sigma;
        cj["B"] = c.B;
        cj["B_support_cap"] = c.B_support_cap;
        cj["eta_range_valid"] = c.eta_range.valid;
        cj["eta_max"] = c.eta_range.eta_max;
        j["constants"] = cj;
    }
    if (rep.bounds) {
        json bj;
        bj["eta"] = rep.bounds_eta;
        bj["valid"] = rep.bounds->valid;
        bj["rho"] = rep.bounds->rho;
        bj["ball_stochastic"] = rep.bounds->ball_stochastic;
        bj["ball_model"] = rep.bounds->ball_model;
        j["bounds"] = bj;
    }
    if (!rep.trace_files.empty()) j["traces"] = rep.trace_files;
    if (!rep.notes.empty()) j["notes"] = rep.notes;

    out << kMachineMarker << "\n" << j.dump(2) << "\n";
}

ExperimentReport parse_solution_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::string line;
    bool in_machine = false;
    std::string payload;
    while (std::getline(in, line)) {
        if (in_machine) {
            payload += line;
            payload += '\n';
        } else if (line == kMachineMarker) {
            in_machine = true;
        }
    }
    if (!in_machine)
        throw std::runtime_error("report '" + path + "' has no machine-readable block");
    const json j = json::parse(payload);

    ExperimentReport rep;
    rep.scenario_name = j.value("scenario", "");
    rep.command = j.value("command", "");
    if (j.contains("solutions")) {
        for (const auto& sj : j.at("solutions")) {
            AlgorithmSolution s;
            s.algorithm = sj.at("algorithm").get<std::string>();
            s.decision = decision_from_json(sj.at("decision"));
            s.objective = sj.at("objective").get<double>();
            if (sj.contains("cv")) s.cv = sj.at("cv").get<double>();
            if (sj.contains("cv_sd")) s.cv_sd = sj.at("cv_sd").get<double>();
            if (sj.contains("robust_feasible"))
                s.robust_feasible = sj.at("robust_feasible").get<bool>();
            rep.solutions.push_back(std::move(s));
        }
    }
    if (j.contains("intervals")) {
        for (const auto& uj : j.at("intervals")) {
            UserInterval u;
            u.user = uj.at("user").get<std::size_t>();
            u.center = uj.at("center").get<double>();
            u.radius = uj.at("radius").get<double>();
            u.lo = uj.at("lo").get<double>();
            u.hi = uj.at("hi").get<double>();
            rep.intervals.push_back(u);
        }
    }
    if (j.contains("constants")) {
        const auto& cj = j.at("constants");
        ConstantsReport c;
        c.mu = cj.at("mu").get<double>();
        c.L = cj.at("L").get<double>();
        c.eps = cj.at("eps").get<double>();
        c.eps_sampled = cj.value("eps_sampled", 0.0);
        c.sigma = cj.at("sigma").get<double>();
        c.B = cj.at("B").get<double>();
        c.B_support_cap = cj.value("B_support_cap", 0.0);
        c.eta_range.valid = cj.value("eta_range_valid", false);
        c.eta_range.eta_max = cj.value("eta_max", 0.0);
        rep.constants = c;
    }
    if (j.contains("bounds")) {
        const auto& bj = j.at("bounds");
        ConvergenceBounds b;
        rep.bounds_eta = bj.value("eta", 0.0);
        b.valid = bj.at("valid").get<bool>();
        b.rho = bj.at("rho").get<double>();
        b.ball_stochastic = bj.at("ball_stochastic").get<double>();
        b.ball_model = bj.at("ball_model").get<double>();
        rep.bounds = b;
    }
    if (j.contains("traces"))
        rep.trace_files = j.at("traces").get<std::vector<std::string>>();
    if (j.contains("notes"))
        rep.notes = j.at("notes").get<std::vector<std::string>>();
    return rep;
}

} // namespace flexo
