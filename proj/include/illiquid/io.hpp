#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "illiquid/errors.hpp"
#include "illiquid/model.hpp"
#include "illiquid/policy.hpp"
#include "illiquid/sim.hpp"

namespace illiquid {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct Field {
    const char* key;
    double MarketParams::*ptr;
    bool required;
};

inline const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"mu1", &MarketParams::mu1, true},           {"sigma1", &MarketParams::sigma1, true},
        {"mu2", &MarketParams::mu2, true},           {"sigma2", &MarketParams::sigma2, true},
        {"rho", &MarketParams::rho, true},           {"delta", &MarketParams::delta, true},
        {"p", &MarketParams::p, true},               {"lambda_buy", &MarketParams::lambda_buy, true},
        {"lambda_sell", &MarketParams::lambda_sell, true}, {"eta0", &MarketParams::eta0, false},
        {"eta1", &MarketParams::eta1, false},        {"eta2", &MarketParams::eta2, false},
        {"s1_0", &MarketParams::s1_0, false},        {"s2_0", &MarketParams::s2_0, false},
    };
    return f;
}

inline double parse_number(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("value of '" + key + "' is not a number: '" + v + "'");
    }
    if (used != v.size()) throw ConfigError("value of '" + key + "' is not a number: '" + v + "'");
    return d;
}

} // namespace detail

/// key = value lines; '#' starts a comment. Overrides ("key=value") are applied after the file.
inline MarketParams parse_params(std::istream& is, const std::vector<std::string>& overrides = {}) {
    std::map<std::string, std::string> kv;
    std::string line;
    int ln = 0;
    auto put = [&](const std::string& raw, const std::string& where) {
        const auto eq = raw.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        std::string key = detail::trim(raw.substr(0, eq)), val = detail::trim(raw.substr(eq + 1));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
        bool known = false;
        for (const auto& f : detail::fields()) known = known || key == f.key;
        if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
        kv[key] = val;
    };
    while (std::getline(is, line)) {
        ++ln;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        put(line, "line " + std::to_string(ln));
    }
    for (const auto& o : overrides) put(o, "override '" + o + "'");

    MarketParams m;
    std::string missing;
    for (const auto& f : detail::fields()) {
        const auto it = kv.find(f.key);
        if (it == kv.end()) {
            if (f.required) missing += std::string(missing.empty() ? "" : ", ") + f.key;
            continue;
        }
        m.*f.ptr = detail::parse_number(f.key, it->second);
    }
    if (!missing.empty()) throw ConfigError("missing required keys: " + missing);
    return m;
}

inline MarketParams load_params(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open parameter file '" + path + "'");
    return parse_params(in, overrides);
}

inline nlohmann::ordered_json to_json(const MarketParams& m) {
    nlohmann::ordered_json j;
    for (const auto& f : detail::fields()) j[f.key] = m.*f.ptr;
    return j;
}

inline nlohmann::ordered_json to_json(const DerivedConstants& dc) {
    return {{"q", dc.q},     {"regime", to_string(dc.regime)}, {"y_lo", dc.y_lo}, {"y_hi", dc.y_hi},
            {"band_width", dc.band_width}, {"y_C", dc.y_C}, {"x_D", dc.x_D}, {"y_D", dc.y_D},
            {"x_M", dc.x_M}, {"y_M", dc.y_M}, {"pi_star", dc.x_M / (dc.q * dc.y_M)}};
}

inline nlohmann::ordered_json to_json(const AsymptoticCoeffs& a) {
    return {{"zeta0", a.zeta0},
            {"zeta1", a.zeta1},
            {"zeta0_unnormalized", a.zeta0_unnormalized},
            {"zeta1_rho0_form", a.zeta1_rho0},
            {"zeta1_single_asset", a.zeta1_single}};
}

inline nlohmann::ordered_json policy_summary(const FreeBoundarySolution& sol, const PolicySurface& P) {
    const AsymptoticCoeffs a = asymptotic_coeffs(sol.constants().params);
    nlohmann::ordered_json j = {{"x_lo", sol.x_lo()},
                                {"x_hi", sol.x_hi()},
                                {"x_hat", P.x_hat},
                                {"pi_lo", P.pi_lo},
                                {"pi_hi", P.pi_hi},
                                {"value", P.value},
                                {"zeta0", a.zeta0},
                                {"zeta1", a.zeta1},
                                {"zeta0_unnormalized", a.zeta0_unnormalized},
                                {"initial_trade", {{"kind", to_string(P.initial_trade.kind)},
                                                   {"shares", P.initial_trade.shares}}}};
    j["warnings"] = P.warnings;
    return j;
}

inline void write_policy_csv(const PolicySurface& P, std::ostream& os) {
    os << "x,f,pi1,pi2,mapped\n";
    char buf[160];
    for (std::size_t i = 0; i < P.x.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", P.x[i], P.f[i], P.pi1[i], P.pi2[i],
                      P.mapped[i]);
        os << buf;
    }
}

/// Long format: one row per (path, step).
inline void write_paths_csv(const std::vector<SimulatedPath>& paths, std::ostream& os) {
    os << "path,t,X,phi_up,phi_down,S1,S2,S_tilde,H,W,c,phi0,phi1,phi2\n";
    char buf[512];
    for (std::size_t k = 0; k < paths.size(); ++k) {
        const auto& P = paths[k];
        for (std::size_t i = 0; i < P.t.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%.10g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          k, P.t[i], P.X[i], P.phi_up[i], P.phi_down[i], P.S1[i], P.S2[i], P.S_tilde[i], P.H[i],
                          P.W[i], P.c[i], P.phi0[i], P.phi1[i], P.phi2[i]);
            os << buf;
        }
    }
}

inline nlohmann::ordered_json to_json(const SimConfig& c) {
    return {{"horizon", c.horizon}, {"n_steps", c.n_steps},       {"n_paths", c.n_paths},
            {"seed", c.seed},       {"antithetic", c.antithetic}, {"table_nodes", c.table_nodes}};
}

} // namespace illiquid
