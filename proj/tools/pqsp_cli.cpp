// Batch front end: single Poisson solves, mountain-pass searches, parameter
// sweeps and the lambda-window bisection, with CSV/JSON artifacts.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pqsp/config.hpp"
#include "pqsp/energy.hpp"
#include "pqsp/errors.hpp"
#include "pqsp/grid.hpp"
#include "pqsp/mpa.hpp"
#include "pqsp/params.hpp"
#include "pqsp/qpoisson.hpp"
#include "pqsp/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitCertificate = 4;

void write_provenance(const fs::path& dir, const pqsp::RunConfig& cfg) {
    fs::create_directories(dir);
    pqsp::write_text_atomic(dir / "run_config.json",
                            cfg.resolved().dump(2) + "\n");
}

json critical_point_json(const pqsp::CriticalPoint& cp) {
    json j;
    j["level"] = cp.level;
    j["grad_dual_norm"] = cp.grad_dual_norm;
    j["criticality"] = cp.criticality;
    j["pde_residual"] = cp.pde_residual;
    j["poisson_residual"] = cp.poisson_residual;
    j["j_tilde"] = cp.j_tilde;
    j["norm_u"] = cp.norm_u;
    j["regime"] = pqsp::to_string(cp.regime);
    j["cutoff_active"] = cp.cutoff_active;
    j["within_window"] = cp.within_window;
    j["uncut_criticality"] = cp.uncut_criticality;
    j["cutoff_M"] = cp.cutoff_M;
    j["outer_iters"] = cp.outer_iters;
    j["polish_iters"] = cp.polish_iters;
    j["poisson_solves"] = cp.poisson_solves;
    return j;
}

int cmd_solve_poisson(const pqsp::RunConfig& cfg, bool with_oracle) {
    auto e = cfg.validated();
    auto grid = cfg.make_grid();
    auto u = pqsp::RadialField::sample(grid, cfg.seed_profile);

    pqsp::PoissonProblem prob;
    prob.u = u;
    prob.q = e.q;
    prob.s = e.s;
    prob.tol = cfg.poisson.tol;
    prob.eps_factor = cfg.poisson.eps_factor;
    prob.max_iters = cfg.poisson.max_iters;
    auto sol = pqsp::solve_q_poisson(prob);

    write_provenance(cfg.output_dir, cfg);
    json meta;
    meta["iterations"] = sol.iterations;
    meta["residual_norm"] = sol.residual_norm;
    meta["farfield_constant"] = sol.farfield_constant;
    meta["energy"] = sol.energy;
    json sched = json::array();
    for (const auto& st : sol.certificate.eps_schedule)
        sched.push_back({{"eps", st.eps},
                         {"iterations", st.iterations},
                         {"rel_residual", st.rel_residual},
                         {"movement", st.movement}});
    meta["eps_schedule"] = sched;
    meta["min_phi"] = sol.certificate.min_phi;
    meta["max_phi"] = sol.certificate.max_phi;
    meta["coercivity_ratio"] = sol.certificate.coercivity_ratio;
    pqsp::write_field_csv(cfg.output_dir / "phi.csv", sol.phi, &meta);

    if (with_oracle) {
        if (e.q != 2.0) {
            std::cerr << "--oracle requires q = 2\n";
            return kExitConfig;
        }
        auto oracle = pqsp::oracle_q2(u, e.s);
        pqsp::write_field_csv(cfg.output_dir / "phi_oracle.csv", oracle);
        json err;
        err["rel_linf_error"] = pqsp::linf_diff_rel(sol.phi, oracle);
        double l2n = 0.0, l2d = 0.0;
        const auto& w = grid->node_weights();
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double d = sol.phi[i] - oracle[i];
            l2n += w[i] * d * d;
            l2d += w[i] * oracle[i] * oracle[i];
        }
        err["rel_l2_error"] = l2d > 0 ? std::sqrt(l2n / l2d) : std::sqrt(l2n);
        pqsp::write_text_atomic(cfg.output_dir / "oracle_error.json",
                                err.dump(2) + "\n");
        std::cout << "oracle rel Linf error: "
                  << err["rel_linf_error"].get<double>() << "\n";
    }
    std::cout << "poisson solve: " << sol.iterations
              << " iterations, residual " << sol.residual_norm << "\n";
    return 0;
}

int cmd_find_critical(const pqsp::RunConfig& cfg) {
    auto e = cfg.validated();
    auto grid = cfg.make_grid();
    pqsp::EnergyModel model(e, grid, cfg.poisson);
    auto seed = pqsp::RadialField::sample(grid, cfg.seed_profile);

    write_provenance(cfg.output_dir, cfg);
    pqsp::MpaConfig mcfg = cfg.mpa;
    if (mcfg.trace_path.empty())
        mcfg.trace_path = (cfg.output_dir / "trace.csv").string();

    auto emit = [&](const pqsp::CriticalPoint& cp, const char* status) {
        json j = critical_point_json(cp);
        j["status"] = status;
        pqsp::write_text_atomic(cfg.output_dir / "critical_point.json",
                                j.dump(2) + "\n");
        pqsp::write_field_csv(cfg.output_dir / "u.csv", cp.u, &j);
        std::cout << "status=" << status << " level=" << cp.level
                  << " norm=" << cp.norm_u << " criticality=" << cp.criticality
                  << "\n";
    };

    try {
        auto cp = pqsp::run_mpa(model, seed, mcfg);
        emit(cp, "converged");
        return 0;
    } catch (const pqsp::MpaNoConvergence& err) {
        emit(err.best, "no_convergence");
        std::cerr << err.what() << "\n";
        return kExitNoConvergence;
    } catch (const pqsp::WindowViolation& err) {
        std::cerr << err.what() << "\n";
        json j;
        j["status"] = "window_violation";
        j["norm_u"] = err.norm_u;
        j["window"] = err.window;
        pqsp::write_text_atomic(cfg.output_dir / "critical_point.json",
                                j.dump(2) + "\n");
        return kExitCertificate;
    }
}

int cmd_verify(const pqsp::RunConfig& cfg, const fs::path& field_path) {
    auto e = cfg.validated();
    auto u = pqsp::read_field_csv(field_path);
    pqsp::EnergyModel model(e, u.grid(), cfg.poisson);
    auto rep = pqsp::verify_critical_point(u, model);

    write_provenance(cfg.output_dir, cfg);
    json j;
    j["trivial"] = rep.trivial;
    j["criticality"] = rep.criticality;
    j["grad_dual_norm"] = rep.grad_dual_norm;
    j["pde_residual"] = rep.pde_residual;
    j["poisson_residual"] = rep.poisson_residual;
    j["norm_u"] = rep.norm_u;
    if (rep.j_tilde_valid) j["j_tilde"] = rep.j_tilde;
    j["energy"] = {{"kinetic", rep.energy.kinetic},
                   {"mass", rep.energy.mass},
                   {"nonlocal", rep.energy.nonlocal},
                   {"local", rep.energy.local_term},
                   {"total", rep.energy.total}};
    pqsp::write_text_atomic(cfg.output_dir / "verify.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

struct SweepRow {
    double value = 0;
    std::string status;
    double level = 0, norm_u = 0, criticality = 0, pde_residual = 0;
    bool within_window = false;
    double cutoff_M = 0;
    std::string regime;
};

SweepRow sweep_probe(const pqsp::RunConfig& base, const std::string& axis,
                     double value) {
    SweepRow row;
    row.value = value;
    pqsp::RunConfig cfg = base;
    if (axis == "lambda")
        cfg.lambda = value;
    else if (axis == "r")
        cfg.r = value;
    else if (axis == "t")
        cfg.seed_profile = cfg.seed_profile.rescaled(value, 1.0);
    try {
        auto e = cfg.validated();
        row.regime = pqsp::to_string(pqsp::theorem_regime(e));
        auto grid = cfg.make_grid();
        pqsp::EnergyModel model(e, grid, cfg.poisson);
        auto seed = pqsp::RadialField::sample(grid, cfg.seed_profile);
        auto cp = pqsp::run_mpa(model, seed, cfg.mpa);
        row.status = "ok";
        row.level = cp.level;
        row.norm_u = cp.norm_u;
        row.criticality = cp.criticality;
        row.pde_residual = cp.pde_residual;
        row.within_window = cp.regime == pqsp::Regime::AnyLambda
                                ? true
                                : cp.within_window;
        row.cutoff_M = cp.cutoff_M;
    } catch (const pqsp::WindowViolation& err) {
        row.status = "window_violation";
        row.norm_u = err.norm_u;
        row.cutoff_M = 2.0 * err.window;
    } catch (const pqsp::MpaNoConvergence& err) {
        row.status = "no_convergence";
        row.level = err.best.level;
        row.norm_u = err.best.norm_u;
        row.criticality = err.best.criticality;
    } catch (const pqsp::Error& err) {
        row.status = std::string("error: ") + err.what();
    }
    return row;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "value,status,regime,level,norm_u,criticality,pde_residual,"
          "within_window,cutoff_M\n";
    for (const auto& r : rows) {
        std::string status = r.status;
        for (char& ch : status)
            if (ch == ',') ch = ';';
        os << pqsp::format_double(r.value) << ',' << status << ',' << r.regime
           << ',' << pqsp::format_double(r.level) << ','
           << pqsp::format_double(r.norm_u) << ','
           << pqsp::format_double(r.criticality) << ','
           << pqsp::format_double(r.pde_residual) << ','
           << (r.within_window ? 1 : 0) << ','
           << pqsp::format_double(r.cutoff_M) << '\n';
    }
    pqsp::write_text_atomic(path, os.str());
}

int cmd_sweep(pqsp::RunConfig cfg, const std::string& axis,
              std::vector<double> values, bool bisect, double bracket_ratio) {
    write_provenance(cfg.output_dir, cfg);
    std::vector<SweepRow> rows;

    if (bisect) {
        if (axis != "lambda") {
            std::cerr << "bisection mode is lambda-only\n";
            return kExitConfig;
        }
        // Freeze M across the whole bisection so the window edge is
        // well-defined: resolve the auto policy on the first probe.
        {
            auto e0 = cfg.validated();
            auto grid = cfg.make_grid();
            pqsp::EnergyModel model(e0, grid, cfg.poisson);
            auto seed = pqsp::RadialField::sample(grid, cfg.seed_profile);
            auto path = pqsp::initial_path(model, seed, cfg.mpa);
            if (path.cutoff_M > 0.0) cfg.mpa.cutoff_M = path.cutoff_M;
        }
        auto probe = [&](double lam) {
            auto row = sweep_probe(cfg, "lambda", lam);
            rows.push_back(row);
            return row.status == "ok" && row.within_window;
        };
        double lam = cfg.lambda;
        bool ok = probe(lam);
        double lam_ok = ok ? lam : 0.0, lam_fail = ok ? 0.0 : lam;
        for (int it = 0; it < 60 && (lam_ok == 0.0 || lam_fail == 0.0); ++it) {
            if (ok) {
                lam *= 2.0;
                if (probe(lam))
                    lam_ok = lam;
                else {
                    lam_fail = lam;
                    break;
                }
            } else {
                lam *= 0.5;
                if (probe(lam)) {
                    lam_ok = lam;
                    break;
                }
                lam_fail = lam;
            }
        }
        if (lam_ok == 0.0 || lam_fail == 0.0) {
            std::cerr << "bisection failed to bracket the window edge\n";
            write_sweep_csv(cfg.output_dir / "sweep.csv", rows);
            return kExitNoConvergence;
        }
        while (lam_fail / lam_ok > bracket_ratio) {
            const double mid = std::sqrt(lam_ok * lam_fail);
            if (probe(mid))
                lam_ok = mid;
            else
                lam_fail = mid;
        }
        json bracket;
        bracket["lambda_ok"] = lam_ok;
        bracket["lambda_fail"] = lam_fail;
        bracket["ratio"] = lam_fail / lam_ok;
        pqsp::write_text_atomic(cfg.output_dir / "bracket.json",
                                bracket.dump(2) + "\n");
        std::cout << "window bracket: [" << lam_ok << ", " << lam_fail
                  << "] ratio " << lam_fail / lam_ok << "\n";
    } else {
        std::vector<std::future<SweepRow>> futs;
        const int jobs = std::max(1, cfg.jobs);
        if (jobs == 1) {
            for (double v : values) rows.push_back(sweep_probe(cfg, axis, v));
        } else {
            for (double v : values)
                futs.push_back(std::async(std::launch::async, sweep_probe, cfg,
                                          axis, v));
            for (auto& f : futs) rows.push_back(f.get());
        }
    }
    write_sweep_csv(cfg.output_dir / "sweep.csv", rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasilinear (p,q)-Schrodinger-Poisson toolbox"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    bool deterministic_flag = false;
    app.add_option("--config", config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_override, "output directory override");
    app.add_flag("--deterministic", deterministic_flag,
                 "force deterministic single-threaded execution");

    auto* sp = app.add_subcommand("solve-poisson",
                                  "solve -Delta_q phi = |u|^s for the seed");
    bool with_oracle = false;
    sp->add_flag("--oracle", with_oracle,
                 "also write the q=2 Newton-potential oracle and error norms");

    auto* fc = app.add_subcommand("find-critical",
                                  "mountain-pass search for a nontrivial solution");

    auto* vf = app.add_subcommand("verify", "re-verify a saved field");
    std::string field_path;
    vf->add_option("--field", field_path, "field CSV written by find-critical")
        ->required()
        ->check(CLI::ExistingFile);

    auto* sw = app.add_subcommand("sweep", "row-per-value parameter sweep");
    std::string axis = "lambda";
    std::string values_str;
    bool bisect = false;
    double bracket_ratio = 1.1;
    sw->add_option("--axis", axis, "lambda | r | t")
        ->check(CLI::IsMember({"lambda", "r", "t"}));
    sw->add_option("--values", values_str, "comma-separated axis values");
    sw->add_flag("--bisect", bisect,
                 "bracket the largest lambda with an in-window solution");
    sw->add_option("--bracket-ratio", bracket_ratio,
                   "stop when lambda_fail/lambda_ok is below this");

    CLI11_PARSE(app, argc, argv);

    try {
        pqsp::RunConfig cfg = config_path.empty()
                                  ? pqsp::RunConfig{}
                                  : pqsp::load_config(config_path);
        if (!out_override.empty()) cfg.output_dir = out_override;
        if (deterministic_flag) {
            cfg.deterministic = true;
            cfg.jobs = 1;
        }

        if (sp->parsed()) return cmd_solve_poisson(cfg, with_oracle);
        if (fc->parsed()) return cmd_find_critical(cfg);
        if (vf->parsed()) return cmd_verify(cfg, field_path);
        if (sw->parsed()) {
            std::vector<double> values;
            std::stringstream ss(values_str);
            std::string tok;
            while (std::getline(ss, tok, ','))
                if (!tok.empty()) values.push_back(pqsp::parse_double(tok));
            if (!bisect && !std::is_sorted(values.begin(), values.end())) {
                std::cerr << "sweep values must be sorted\n";
                return kExitConfig;
            }
            return cmd_sweep(cfg, axis, values, bisect, bracket_ratio);
        }
    } catch (const pqsp::RangeError& e) {
        std::cerr << "RangeError: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pqsp::ConfigError& e) {
        std::cerr << "ConfigError: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pqsp::NoConvergence& e) {
        std::cerr << "NoConvergence: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const pqsp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
