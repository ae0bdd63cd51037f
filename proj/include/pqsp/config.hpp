#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "pqsp/energy.hpp"
#include "pqsp/grid.hpp"
#include "pqsp/mpa.hpp"
#include "pqsp/params.hpp"

namespace pqsp {

// Batch run configuration. Parsed from a JSON file; any scalar key can be
// overridden by an environment variable PQSP_<SECTION>_<KEY> (upper case),
// e.g. PQSP_PARAMS_LAMBDA=0.5 or PQSP_GRID_N=2048.
struct RunConfig {
    double p = 2, q = 2, s = 2, r = 4, lambda = 1;

    double grid_R = 15.0;
    std::size_t grid_n = 1024;
    GradingSpec grading;

    PoissonPolicy poisson;
    MpaConfig mpa;
    std::optional<double> cutoff_M;
    bool cutoff_auto = true;

    Profile seed_profile{Profile::Kind::Gaussian, 1.0, 1.0};
    std::filesystem::path output_dir = "out";
    bool deterministic = true;
    int jobs = 1;  // sweep worker slots; deterministic forces 1

    ExponentSet validated() const;
    GridPtr make_grid() const;
    nlohmann::json resolved() const;  // full provenance record
};

RunConfig load_config(const std::filesystem::path& json_path,
                      const char* env_prefix = "PQSP_");
RunConfig config_from_json(const nlohmann::json& j,
                           const char* env_prefix = "PQSP_");

}  // namespace pqsp
