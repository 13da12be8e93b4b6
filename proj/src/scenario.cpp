#include "flexo/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "flexo/rng.hpp"

namespace flexo {

namespace {

using nlohmann::json;

constexpr std::uint64_t kTagWeights = 0x77u;
constexpr std::uint64_t kTagXref = 0x78u;

std::string kind_name(ShiftKind k) {
    switch (k) {
    case ShiftKind::constant: return "constant";
    case ShiftKind::affine: return "affine";
    case ShiftKind::band_reaction: return "band_reaction";
    case ShiftKind::linear_pull: return "linear_pull";
    }
    return "constant";
}

ShiftKind kind_from_name(const std::string& s) {
    if (s == "constant") return ShiftKind::constant;
    if (s == "affine") return ShiftKind::affine;
    if (s == "band_reaction") return ShiftKind::band_reaction;
    if (s == "linear_pull") return ShiftKind::linear_pull;
    throw std::invalid_argument("scenario: unknown shift kind '" + s + "'");
}

json rule_to_json(const ShiftRule& r) {
    json j;
    j["kind"] = kind_name(r.kind);
    switch (r.kind) {
    case ShiftKind::constant:
        j["level"] = r.level;
        break;
    case ShiftKind::affine:
        j["level"] = r.level;
        j["slope_x"] = r.slope_x;
        j["slope_beta"] = r.slope_beta;
        j["x0"] = r.x0;
        j["b0"] = r.b0;
        break;
    case ShiftKind::band_reaction:
        j["band_lo"] = r.band_lo;
        j["band_hi"] = r.band_hi;
        j["gain"] = r.gain;
        break;
    case ShiftKind::linear_pull:
        j["center"] = r.center;
        j["gain"] = r.gain;
        break;
    }
    return j;
}

ShiftRule rule_from_json(const json& j) {
    ShiftRule r;
    r.kind = kind_from_name(j.at("kind").get<std::string>());
    r.level = j.value("level", 0.0);
    r.slope_x = j.value("slope_x", 0.0);
    r.slope_beta = j.value("slope_beta", 0.0);
    r.x0 = j.value("x0", 0.0);
    r.b0 = j.value("b0", 0.0);
    r.band_lo = j.value("band_lo", 19.0);
    r.band_hi = j.value("band_hi", 20.5);
    r.center = j.value("center", 19.75);
    r.gain = j.value("gain", 1.0);
    return r;
}

json model_to_json(const ResponseModel& m) {
    json j;
    j["noise_sd"] = m.noise_sd;
    bool uniform = true;
    for (std::size_t i = 1; i < m.rules.size(); ++i) {
        // cheap structural comparison through the serialized form
        if (rule_to_json(m.rules[i]) != rule_to_json(m.rules[0])) {
            uniform = false;
            break;
        }
    }
    if (uniform && !m.rules.empty()) {
        j["rule"] = rule_to_json(m.rules[0]);
    } else {
        json arr = json::array();
        for (const auto& r : m.rules) arr.push_back(rule_to_json(r));
        j["rules"] = arr;
    }
    return j;
}

ResponseModel model_from_json(const json& j, std::size_t n) {
    ResponseModel m;
    m.noise_sd = j.value("noise_sd", 0.0);
    if (m.noise_sd < 0.0) throw std::invalid_argument("scenario: negative noise_sd");
    if (j.contains("rule")) {
        m.rules.assign(n, rule_from_json(j.at("rule")));
    } else if (j.contains("rules")) {
        const auto& arr = j.at("rules");
        if (arr.size() != n)
            throw std::invalid_argument("scenario: rules array must have n entries");
        for (const auto& rj : arr) m.rules.push_back(rule_from_json(rj));
    } else {
        throw std::invalid_argument("scenario: model needs 'rule' or 'rules'");
    }
    return m;
}

json region_to_json(const SearchRegion& r) {
    json j;
    j["x_lo"] = r.x_lo;
    j["x_hi"] = r.x_hi;
    j["beta_lo"] = r.beta_lo;
    j["beta_hi"] = r.beta_hi;
    j["lambda_max"] = r.lambda_max;
    return j;
}

SearchRegion region_from_json(const json& j, const FlexProblem& p) {
    SearchRegion r;
    if (j.contains("x_margin")) {
        const double m = j.at("x_margin").get<double>();
        r.x_lo.resize(p.n);
        r.x_hi.resize(p.n);
        for (std::size_t i = 0; i < p.n; ++i) {
            r.x_lo[i] = p.x_ref[i] - m;
            r.x_hi[i] = p.x_ref[i] + m;
        }
    } else {
        r.x_lo = j.at("x_lo").get<std::vector<double>>();
        r.x_hi = j.at("x_hi").get<std::vector<double>>();
    }
    r.beta_lo = j.value("beta_lo", 0.0);
    r.beta_hi = j.value("beta_hi", 1.0);
    r.lambda_max = j.value("lambda_max", 100.0);
    return r;
}

} // namespace

void Scenario::validate() const {
    problem.validate();
    chance.validate();
    region.validate(problem.n);
    est.region.validate(problem.n);
    if (true_model.users() != problem.n || ms_model.users() != problem.n)
        throw std::invalid_argument("scenario: model size mismatch");
    if (algo.eta <= 0.0 || algo.eta_ref <= 0.0)
        throw std::invalid_argument("scenario: step sizes must be positive");
    if (algo.realizations == 0)
        throw std::invalid_argument("scenario: realizations must be >= 1");
    if (algo.round && algo.resolution <= 0.0)
        throw std::invalid_argument("scenario: rounding needs a positive resolution");
}

void build_corridor(FlexProblem& p, double bound, bool two_sided) {
    const std::size_t n = p.n;
    const std::size_t pairs = n >= 2 ? n - 1 : 0;
    const std::size_t c = two_sided ? 2 * pairs : pairs;
    p.D.assign(c * n, 0.0);
    p.e.assign(c, bound);
    for (std::size_t j = 0; j < pairs; ++j) {
        p.D[j * n + j] = 1.0;
        p.D[j * n + j + 1] = -1.0;
        if (two_sided) {
            p.D[(pairs + j) * n + j] = -1.0;
            p.D[(pairs + j) * n + j + 1] = 1.0;
        }
    }
}

Scenario generate_example_scenario(std::uint64_t seed) {
    Scenario s;
    s.name = "corridor_n7_seed" + std::to_string(seed);

    FlexProblem& p = s.problem;
    p.n = 7;
    p.epsilon_x = 0.001;
    p.epsilon_beta = 0.01;
    p.gamma = 2.0 * double(p.n);

    Rng wrng(mix_seed(seed, kTagWeights));
    p.weights.resize(p.n);
    for (double& w : p.weights) w = wrng.uniform(0.1, 1.0);

    Rng xrng(mix_seed(seed, kTagXref));
    p.x_ref.resize(p.n);
    for (double& v : p.x_ref) v = xrng.normal(19.5, 1.0);

    build_corridor(p, 1.0, false);

    s.chance = ChanceParams{1.5, 0.2, 0.01};

    // The search box sits below the reference levels: the one-sided corridor
    // rows exert an upward force on the last user that would otherwise push
    // its decision above the reference, while every equilibrium of interest
    // trades comfort downwards (cf. the reported solutions, all below x_ref).
    s.region.x_lo.resize(p.n);
    s.region.x_hi.resize(p.n);
    for (std::size_t i = 0; i < p.n; ++i) {
        s.region.x_lo[i] = p.x_ref[i] - 5.0;
        s.region.x_hi[i] = p.x_ref[i] - 0.25;
    }
    s.region.beta_lo = 0.0;
    s.region.beta_hi = 1.0;
    s.region.lambda_max = 100.0;

    s.true_model = make_band_reaction_model(p.n, std::sqrt(0.1));
    s.ms_model = make_linear_pull_model(p.n);

    s.algo = AlgorithmSettings{};

    s.est.region.x_lo.resize(p.n);
    s.est.region.x_hi.resize(p.n);
    for (std::size_t i = 0; i < p.n; ++i) {
        s.est.region.x_lo[i] = p.x_ref[i] - 3.0;
        s.est.region.x_hi[i] = p.x_ref[i] - 0.25;
    }
    s.est.region.beta_lo = 0.0;
    s.est.region.beta_hi = 1.0;
    s.est.region.lambda_max = 20.0;

    s.seeds.weights = mix_seed(seed, 1);
    s.seeds.x_ref = mix_seed(seed, 2);
    s.seeds.noise = mix_seed(seed, 3);
    s.seeds.bpd = mix_seed(seed, 4);
    s.seeds.estimators = mix_seed(seed, 5);
    return s;
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;

    json& pj = j["problem"];
    pj["n"] = s.problem.n;
    pj["epsilon_x"] = s.problem.epsilon_x;
    pj["epsilon_beta"] = s.problem.epsilon_beta;
    pj["weights"] = s.problem.weights;
    pj["x_ref"] = s.problem.x_ref;
    pj["gamma"] = s.problem.gamma;
    pj["D"] = s.problem.D;
    pj["e"] = s.problem.e;

    json& cj = j["chance"];
    cj["u"] = s.chance.u;
    cj["delta"] = s.chance.delta;
    cj["nu"] = s.chance.nu;

    j["region"] = region_to_json(s.region);
    j["models"]["true"] = model_to_json(s.true_model);
    j["models"]["misspecified"] = model_to_json(s.ms_model);

    json& aj = j["algorithm"];
    aj["eta"] = s.algo.eta;
    aj["eta_ref"] = s.algo.eta_ref;
    aj["iters"] = s.algo.iters;
    aj["realizations"] = s.algo.realizations;
    aj["T"] = s.algo.T;
    aj["guard"] = s.algo.guard;
    aj["round"] = s.algo.round;
    aj["resolution"] = s.algo.resolution;
    aj["quad_nodes"] = s.algo.quad_nodes;
    aj["cv_samples"] = s.algo.cv_samples;
    aj["cv_window"] = s.algo.cv_window;
    aj["ref_tol"] = s.algo.ref_tol;
    aj["ref_max_iters"] = s.algo.ref_max_iters;
    aj["solver_tol"] = s.algo.solver_tol;
    aj["solver_max_iters"] = s.algo.solver_max_iters;

    json& ej = j["estimation"];
    ej["pairs"] = s.est.pairs;
    ej["sigma_points"] = s.est.sigma_points;
    ej["sigma_draws"] = s.est.sigma_draws;
    ej["b_points"] = s.est.b_points;
    ej["b_draws"] = s.est.b_draws;
    ej["region"] = region_to_json(s.est.region);

    json& sj = j["seeds"];
    sj["weights"] = s.seeds.weights;
    sj["x_ref"] = s.seeds.x_ref;
    sj["noise"] = s.seeds.noise;
    sj["bpd"] = s.seeds.bpd;
    sj["estimators"] = s.seeds.estimators;

    return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw std::invalid_argument(std::string("scenario: JSON parse error: ") + ex.what());
    }
    try {
        Scenario s;
        s.name = j.value("name", "scenario");

        const json& pj = j.at("problem");
        s.problem.n = pj.at("n").get<std::size_t>();
        s.problem.epsilon_x = pj.at("epsilon_x").get<double>();
        s.problem.epsilon_beta = pj.at("epsilon_beta").get<double>();
        s.problem.weights = pj.at("weights").get<std::vector<double>>();
        s.problem.x_ref = pj.at("x_ref").get<std::vector<double>>();
        s.problem.gamma = pj.at("gamma").get<double>();
        if (pj.contains("corridor")) {
            const json& cj = pj.at("corridor");
            build_corridor(s.problem, cj.value("bound", 1.0),
                           cj.value("two_sided", false));
        } else {
            s.problem.D = pj.value("D", std::vector<double>{});
            s.problem.e = pj.value("e", std::vector<double>{});
        }

        const json& cj = j.at("chance");
        s.chance.u = cj.at("u").get<double>();
        s.chance.delta = cj.at("delta").get<double>();
        s.chance.nu = cj.at("nu").get<double>();

        s.region = region_from_json(j.at("region"), s.problem);
        s.true_model = model_from_json(j.at("models").at("true"), s.problem.n);
        s.ms_model = model_from_json(j.at("models").at("misspecified"), s.problem.n);

        if (j.contains("algorithm")) {
            const json& aj = j.at("algorithm");
            s.algo.eta = aj.value("eta", s.algo.eta);
            s.algo.eta_ref = aj.value("eta_ref", s.algo.eta_ref);
            s.algo.iters = aj.value("iters", s.algo.iters);
            s.algo.realizations = aj.value("realizations", s.algo.realizations);
            s.algo.T = aj.value("T", s.algo.T);
            s.algo.guard = aj.value("guard", s.algo.guard);
            s.algo.round = aj.value("round", s.algo.round);
            s.algo.resolution = aj.value("resolution", s.algo.resolution);
            s.algo.quad_nodes = aj.value("quad_nodes", s.algo.quad_nodes);
            s.algo.cv_samples = aj.value("cv_samples", s.algo.cv_samples);
            s.algo.cv_window = aj.value("cv_window", s.algo.cv_window);
            s.algo.ref_tol = aj.value("ref_tol", s.algo.ref_tol);
            s.algo.ref_max_iters = aj.value("ref_max_iters", s.algo.ref_max_iters);
            s.algo.solver_tol = aj.value("solver_tol", s.algo.solver_tol);
            s.algo.solver_max_iters = aj.value("solver_max_iters", s.algo.solver_max_iters);
        }

        if (j.contains("estimation")) {
            const json& ej = j.at("estimation");
            s.est.pairs = ej.value("pairs", s.est.pairs);
            s.est.sigma_points = ej.value("sigma_points", s.est.sigma_points);
            s.est.sigma_draws = ej.value("sigma_draws", s.est.sigma_draws);
            s.est.b_points = ej.value("b_points", s.est.b_points);
            s.est.b_draws = ej.value("b_draws", s.est.b_draws);
            if (ej.contains("region"))
                s.est.region = region_from_json(ej.at("region"), s.problem);
            else
                s.est.region = s.region;
        } else {
            s.est.region = s.region;
        }

        if (j.contains("seeds")) {
            const json& sj = j.at("seeds");
            s.seeds.weights = sj.value("weights", s.seeds.weights);
            s.seeds.x_ref = sj.value("x_ref", s.seeds.x_ref);
            s.seeds.noise = sj.value("noise", s.seeds.noise);
            s.seeds.bpd = sj.value("bpd", s.seeds.bpd);
            s.seeds.estimators = sj.value("estimators", s.seeds.estimators);
        }

        s.validate();
        return s;
    } catch (const json::exception& ex) {
        throw std::invalid_argument(std::string("scenario: missing or ill-typed field: ") +
                                    ex.what());
    }
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("scenario: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return scenario_from_json(ss.str());
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("scenario: cannot write '" + path + "'");
    out << scenario_to_json(s);
}

} // namespace flexo
