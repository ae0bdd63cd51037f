#include "pqsp/config.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pqsp/errors.hpp"
#include "pqsp/serialize.hpp"

namespace pqsp {

namespace {

std::string upper(std::string s) {
    for (char& c : s) c = char(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

// Environment override: PQSP_<SECTION>_<KEY>.
std::optional<std::string> env_value(const char* prefix,
                                     const std::string& section,
                                     const std::string& key) {
    const std::string name = std::string(prefix) + upper(section) + "_" + upper(key);
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

class Section {
public:
    Section(const nlohmann::json& root, std::string name, const char* prefix)
        : name_(std::move(name)), prefix_(prefix) {
        if (root.contains(name_)) j_ = root.at(name_);
    }

    double num(const std::string& key, double fallback) const {
        if (auto e = env_value(prefix_, name_, key)) return parse_double(*e);
        return j_.value(key, fallback);
    }
    long integer(const std::string& key, long fallback) const {
        if (auto e = env_value(prefix_, name_, key))
            return static_cast<long>(parse_double(*e));
        return j_.value(key, fallback);
    }
    bool boolean(const std::string& key, bool fallback) const {
        if (auto e = env_value(prefix_, name_, key))
            return *e == "1" || *e == "true";
        return j_.value(key, fallback);
    }
    std::string str(const std::string& key, const std::string& fallback) const {
        if (auto e = env_value(prefix_, name_, key)) return *e;
        return j_.value(key, fallback);
    }
    bool has(const std::string& key) const {
        return j_.contains(key) || env_value(prefix_, name_, key).has_value();
    }

private:
    nlohmann::json j_ = nlohmann::json::object();
    std::string name_;
    const char* prefix_;
};

}  // namespace

RunConfig config_from_json(const nlohmann::json& j, const char* env_prefix) {
    RunConfig c;
    Section params(j, "params", env_prefix);
    c.p = params.num("p", c.p);
    c.q = params.num("q", c.q);
    c.s = params.num("s", c.s);
    c.r = params.num("r", c.r);
    c.lambda = params.num("lambda", c.lambda);

    Section grid(j, "grid", env_prefix);
    c.grid_R = grid.num("R", c.grid_R);
    c.grid_n = static_cast<std::size_t>(grid.integer("n", long(c.grid_n)));
    if (grid.str("grading", "uniform") == "geometric")
        c.grading = GradingSpec::geometric(grid.num("ratio", 1.002));

    Section poisson(j, "poisson", env_prefix);
    c.poisson.tol = poisson.num("tol", c.poisson.tol);
    c.poisson.eps_factor = poisson.num("eps_factor", c.poisson.eps_factor);
    c.poisson.max_iters = poisson.integer("max_iters", c.poisson.max_iters);

    Section mpa(j, "mpa", env_prefix);
    c.mpa.path_nodes = int(mpa.integer("path_nodes", c.mpa.path_nodes));
    c.mpa.max_outer_iters = mpa.integer("max_outer_iters", c.mpa.max_outer_iters);
    c.mpa.max_polish_iters =
        mpa.integer("max_polish_iters", c.mpa.max_polish_iters);
    c.mpa.criticality_tol = mpa.num("criticality_tol", c.mpa.criticality_tol);
    c.mpa.strong_residual_tol =
        mpa.num("strong_residual_tol", c.mpa.strong_residual_tol);
    c.mpa.handoff_criticality =
        mpa.num("handoff_criticality", c.mpa.handoff_criticality);
    c.mpa.reparam_every = int(mpa.integer("reparam_every", c.mpa.reparam_every));
    const std::string rp = mpa.str("reparam_policy", "energy_arc");
    if (rp == "none")
        c.mpa.reparam_policy = ReparamPolicy::None;
    else if (rp == "equal_arc")
        c.mpa.reparam_policy = ReparamPolicy::EqualArc;
    else if (rp == "energy_arc")
        c.mpa.reparam_policy = ReparamPolicy::EnergyArc;
    else
        throw ConfigError("config: unknown reparam_policy '" + rp + "'");
    c.mpa.trust_fraction = mpa.num("trust_fraction", c.mpa.trust_fraction);
    c.mpa.t_doubling_budget =
        mpa.integer("t_doubling_budget", c.mpa.t_doubling_budget);

    Section cutoff(j, "cutoff", env_prefix);
    c.cutoff_auto = cutoff.boolean("auto", true);
    if (cutoff.has("M") && !cutoff.boolean("auto", false)) {
        c.cutoff_M = cutoff.num("M", 0.0);
        c.mpa.cutoff_M = c.cutoff_M;
    }

    Section run(j, "run", env_prefix);
    c.output_dir = run.str("output_dir", c.output_dir.string());
    c.deterministic = run.boolean("deterministic", c.deterministic);
    c.jobs = int(run.integer("jobs", c.jobs));
    if (c.deterministic) c.jobs = 1;

    Section seed(j, "seed_profile", env_prefix);
    const std::string kind = seed.str("kind", "gaussian");
    if (kind == "gaussian")
        c.seed_profile.kind = Profile::Kind::Gaussian;
    else if (kind == "bump")
        c.seed_profile.kind = Profile::Kind::Bump;
    else
        throw ConfigError("config: unknown profile kind '" + kind + "'");
    c.seed_profile.amplitude = seed.num("amplitude", 1.0);
    c.seed_profile.a = seed.num("a", 1.0);
    if (!(c.seed_profile.a > 0.0))
        throw ConfigError("config: seed profile needs a > 0");

    return c;
}

RunConfig load_config(const std::filesystem::path& json_path,
                      const char* env_prefix) {
    std::ifstream in(json_path);
    if (!in) throw ConfigError("config: cannot open " + json_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    return config_from_json(j, env_prefix);
}

ExponentSet RunConfig::validated() const {
    return validate_params(p, q, s, r, lambda);
}

GridPtr RunConfig::make_grid() const {
    return RadialGrid::make(grid_R, grid_n, grading);
}

nlohmann::json RunConfig::resolved() const {
    nlohmann::json j;
    j["params"] = {{"p", p}, {"q", q}, {"s", s}, {"r", r}, {"lambda", lambda}};
    j["grid"] = {{"R", grid_R},
                 {"n", grid_n},
                 {"grading", grading.name()},
                 {"ratio", grading.ratio}};
    j["poisson"] = {{"tol", poisson.tol},
                    {"eps_factor", poisson.eps_factor},
                    {"max_iters", poisson.max_iters}};
    j["mpa"] = {{"path_nodes", mpa.path_nodes},
                {"max_outer_iters", mpa.max_outer_iters},
                {"max_polish_iters", mpa.max_polish_iters},
                {"criticality_tol", mpa.criticality_tol},
                {"strong_residual_tol", mpa.strong_residual_tol},
                {"handoff_criticality", mpa.handoff_criticality},
                {"reparam_every", mpa.reparam_every},
                {"trust_fraction", mpa.trust_fraction},
                {"t_doubling_budget", mpa.t_doubling_budget}};
    j["cutoff"] = {{"auto", cutoff_auto}};
    if (cutoff_M) j["cutoff"]["M"] = *cutoff_M;
    j["seed_profile"] = profile_to_json(seed_profile);
    j["run"] = {{"output_dir", output_dir.string()},
                {"deterministic", deterministic},
                {"jobs", jobs}};
    return j;
}

}  // namespace pqsp
