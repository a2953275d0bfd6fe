#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/version.hpp>

#include "CLI11.hpp"
#include "json.hpp"

#include "illiquid/errors.hpp"
#include "illiquid/fbsolver.hpp"
#include "illiquid/io.hpp"
#include "illiquid/model.hpp"
#include "illiquid/policy.hpp"
#include "illiquid/sim.hpp"

namespace illiquid::cli {

struct SweepRow {
    double lambda{};
    bool ok{};
    std::string error;
    double x_lo{}, x_hi{}, pi_lo{}, pi_hi{}, value{};
};

struct LineFit {
    double slope, intercept;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {slope, (sy - slope * sx) / n};
}

/// Solves at lambda_buy = 0, lambda_sell = lambda for each lambda; rows keep the input order.
inline std::vector<SweepRow> sweep(const MarketParams& base, const std::vector<double>& lambdas,
                                   const SolverOptions& opt, unsigned threads = 1) {
    std::vector<SweepRow> rows(lambdas.size());
    illiquid::detail::parallel_for(lambdas.size(), threads, [&](std::size_t i) {
        SweepRow& r = rows[i];
        r.lambda = lambdas[i];
        try {
            MarketParams m = base;
            m.lambda_buy = 0;
            m.lambda_sell = lambdas[i];
            const auto dc = validate(m);
            const auto sol = shoot(dc, opt);
            const auto P = build_policy(sol);
            r.x_lo = sol.x_lo();
            r.x_hi = sol.x_hi();
            r.pi_lo = P.pi_lo;
            r.pi_hi = P.pi_hi;
            r.value = P.value;
            r.ok = true;
        } catch (const Error& e) {
            r.error = e.what();
        }
    });
    return rows;
}

/// Fit of ln(pi_hi - pi_lo) against ln(lambda) over the successful rows; empty below two rows.
inline std::optional<LineFit> band_fit(const std::vector<SweepRow>& rows) {
    std::vector<double> lx, ly;
    for (const auto& r : rows)
        if (r.ok) lx.push_back(std::log(r.lambda)), ly.push_back(std::log(r.pi_hi - r.pi_lo));
    if (lx.size() < 2) return std::nullopt;
    return least_squares(lx, ly);
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw ConfigError("cannot write '" + p.string() + "'");
    o << s;
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline nlohmann::ordered_json manifest(const std::string& command, const MarketParams& m,
                                       const nlohmann::ordered_json& settings) {
    return {{"tool", "illiquid"},
            {"version", kVersion},
            {"command", command},
            {"params", to_json(m)},
            {"settings", settings},
            {"compiler", __VERSION__},
            {"boost", BOOST_LIB_VERSION}};
}

} // namespace detail

/// Entry point shared by the executable and the tests. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Optimal investment and consumption with one illiquid asset under proportional costs"};
    app.require_subcommand(1);

    std::string params_file, out_dir = ".";
    std::vector<std::string> sets;
    double tol = SolverOptions{}.shoot_tol;
    std::uint64_t seed = SimConfig{}.seed;
    std::size_t paths = 1000, dump_paths = 0;
    long long steps = -1;
    double horizon = -1;
    unsigned threads = 1;
    std::vector<double> lambdas;

    auto common = [&](CLI::App* s) {
        s->add_option("--params", params_file, "parameter file (key = value)")->required();
        s->add_option("--set", sets, "override, key=value (repeatable)");
        s->add_option("--out", out_dir, "output directory");
        s->add_option("--tol", tol, "shooting tolerance on the integral constraint");
    };
    auto* solve = app.add_subcommand("solve", "solve the free-boundary problem");
    auto* policy = app.add_subcommand("policy", "solve and derive the trading policy");
    auto* asym = app.add_subcommand("asymptotics", "small-cost expansion coefficients");
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo verification of the shadow-price construction");
    auto* sweep_cmd = app.add_subcommand("sweep", "band width over a list of selling costs (lambda_buy = 0)");
    for (auto* s : {solve, policy, asym, sim_cmd, sweep_cmd}) common(s);
    sim_cmd->add_option("--seed", seed, "master seed");
    sim_cmd->add_option("--paths", paths, "number of paths");
    sim_cmd->add_option("--steps", steps, "number of time steps (default: horizon / 1e-3)");
    sim_cmd->add_option("--horizon", horizon, "time horizon (default: 40 / delta)");
    sim_cmd->add_option("--threads", threads, "worker threads");
    sim_cmd->add_option("--dump", dump_paths, "write this many full paths to paths.csv");
    sweep_cmd->add_option("--lambdas", lambdas, "selling costs")->delimiter(',');
    sweep_cmd->add_option("--threads", threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    }

    namespace fs = std::filesystem;
    try {
        const MarketParams m = load_params(params_file, sets);
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (!fs::is_directory(out_dir)) throw ConfigError("output directory '" + out_dir + "' is not usable");
        const fs::path dir(out_dir);
        SolverOptions opt;
        opt.shoot_tol = tol;
        nlohmann::ordered_json settings = {{"shoot_tol", opt.shoot_tol},
                                           {"rtol", opt.rtol},
                                           {"atol", opt.atol},
                                           {"grid_points", opt.grid_points}};

        if (asym->parsed()) {
            validate(m);
            detail::write_text(dir / "asymptotics.json", detail::dump(to_json(asymptotic_coeffs(m))));
            detail::write_text(dir / "manifest.json", detail::dump(detail::manifest("asymptotics", m, settings)));
            out << "wrote " << (dir / "asymptotics.json").string() << "\n";
            return 0;
        }

        if (sweep_cmd->parsed()) {
            if (lambdas.empty()) throw ConfigError("--lambdas needs at least one value");
            for (double l : lambdas)
                if (!(l > 0 && l < 1)) throw ConfigError("lambdas must lie in (0, 1)");
            const auto rows = sweep(m, lambdas, opt, threads);
            std::ostringstream csv;
            csv << "lambda,x_lo,x_hi,pi_lo,pi_hi,value,status\n";
            char buf[256];
            for (const auto& r : rows) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", r.lambda, r.x_lo, r.x_hi,
                              r.pi_lo, r.pi_hi, r.value);
                std::string status = r.ok ? "ok" : r.error;
                for (char& c : status)
                    if (c == ',' || c == '\n') c = ';';
                csv << buf << status << "\n";
            }
            if (const auto fit = band_fit(rows)) {
                std::snprintf(buf, sizeof buf, "# fit ln(pi_hi-pi_lo) = slope*ln(lambda) + intercept\n"
                                               "# slope=%.17g\n# intercept=%.17g\n", fit->slope, fit->intercept);
                csv << buf;
            }
            detail::write_text(dir / "sweep.csv", csv.str());
            settings["lambdas"] = lambdas;
            detail::write_text(dir / "manifest.json", detail::dump(detail::manifest("sweep", m, settings)));
            out << csv.str();
            return 0;
        }

        const DerivedConstants dc = validate(m);
        const FreeBoundarySolution sol = shoot(dc, opt);
        {
            std::ostringstream csv;
            write_csv(sol, csv);
            detail::write_text(dir / "solution.csv", csv.str());
        }
        nlohmann::ordered_json summary = {{"regime", to_string(dc.regime)},
                                          {"x_lo", sol.x_lo()},
                                          {"x_hi", sol.x_hi()},
                                          {"shoot_param", sol.shoot_param()},
                                          {"integral", sol.total_integral()},
                                          {"band_width", dc.band_width},
                                          {"ode_residual", ode_residual(sol)},
                                          {"derived", to_json(dc)}};

        if (solve->parsed()) {
            detail::write_text(dir / "summary.json", detail::dump(summary));
            detail::write_text(dir / "manifest.json", detail::dump(detail::manifest("solve", m, settings)));
            out << "x_lo=" << sol.x_lo() << " x_hi=" << sol.x_hi() << "\n";
            return 0;
        }

        const PolicySurface P = build_policy(sol);
        if (policy->parsed()) {
            std::ostringstream csv;
            write_policy_csv(P, csv);
            detail::write_text(dir / "policy.csv", csv.str());
            detail::write_text(dir / "policy.json", detail::dump(policy_summary(sol, P)));
            detail::write_text(dir / "manifest.json", detail::dump(detail::manifest("policy", m, settings)));
            for (const auto& w : P.warnings) err << "warning: " << w << "\n";
            out << "band=[" << P.pi_lo << ", " << P.pi_hi << "] value=" << P.value << "\n";
            return 0;
        }

        // simulate
        if (paths == 0) throw ConfigError("--paths must be positive");
        SimConfig cfg;
        cfg.seed = seed;
        cfg.threads = std::max(1u, threads);
        cfg.n_paths = paths;
        cfg.horizon = horizon > 0 ? horizon : 40.0 / m.delta;
        if (steps == 0 || steps < -1) throw ConfigError("--steps must be positive");
        cfg.n_steps = steps > 0 ? std::size_t(steps) : std::size_t(std::llround(cfg.horizon / 1e-3));
        const GEstimate ge = mc_verify_g(P, sol, cfg);

        SimConfig bc = cfg;
        bc.horizon = std::min(1.0, cfg.horizon);
        bc.n_steps = std::max<std::size_t>(1, std::size_t(std::llround(bc.horizon / cfg.dt())));
        bc.n_paths = std::min<std::size_t>(cfg.n_paths, 200);
        const BudgetDiagnostics bd = mc_verify_budget(P, sol, bc);

        const bool g_ok = ge.z <= 3, sand_ok = bd.sandwich_violations == 0, adm_ok = bd.adm_min >= -1e-6,
                   w_ok = bd.w_min > 0;
        nlohmann::ordered_json sim = {{"g_estimate", ge.estimate},
                                      {"g_target", ge.target},
                                      {"stderr", ge.stderr_},
                                      {"z", ge.z},
                                      {"tail_estimate", ge.tail},
                                      {"budget_rms", bd.budget_rms},
                                      {"budget_max", bd.budget_max},
                                      {"adm_min", bd.adm_min},
                                      {"w_min", bd.w_min},
                                      {"sandwich_violations", bd.sandwich_violations},
                                      {"contact_steps", bd.contact_steps},
                                      {"interior_lnphi1_rms", bd.interior_lnphi_rms},
                                      {"checks", {{"g_representation", g_ok},
                                                  {"sandwich", sand_ok},
                                                  {"admissible", adm_ok},
                                                  {"positive_wealth", w_ok}}},
                                      {"config", to_json(cfg)},
                                      {"budget_config", to_json(bc)}};
        detail::write_text(dir / "simulation.json", detail::dump(sim));
        settings["sim"] = to_json(cfg);
        detail::write_text(dir / "manifest.json", detail::dump(detail::manifest("simulate", m, settings)));
        if (dump_paths > 0) {
            SimConfig dcfg = cfg;
            dcfg.n_paths = dump_paths;
            std::ostringstream csv;
            write_paths_csv(illiquid::simulate(P, sol, dcfg), csv);
            detail::write_text(dir / "paths.csv", csv.str());
        }
        const bool pass = g_ok && sand_ok && adm_ok && w_ok;
        out << "g: estimate=" << ge.estimate << " target=" << ge.target << " z=" << ge.z << "\n";
        if (!pass) {
            err << "failed checks:";
            if (!g_ok) err << " g_representation";
            if (!sand_ok) err << " sandwich";
            if (!adm_ok) err << " admissible";
            if (!w_ok) err << " positive_wealth";
            err << "\n";
            return 2;
        }
        return 0;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 2;
    }
}

} // namespace illiquid::cli
