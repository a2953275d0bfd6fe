#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "illiquid/coeffs.hpp"
#include "illiquid/errors.hpp"
#include "illiquid/fbsolver.hpp"
#include "illiquid/model.hpp"

namespace illiquid {

enum class TradeKind { None, BuyToLower, SellToUpper };

inline const char* to_string(TradeKind k) {
    switch (k) {
    case TradeKind::None: return "none";
    case TradeKind::BuyToLower: return "buy";
    case TradeKind::SellToUpper: return "sell";
    }
    return "?";
}

struct InitialTrade {
    TradeKind kind{TradeKind::None};
    double shares{};   // illiquid shares bought (> 0) or sold (< 0) at time 0
};

struct PolicySurface {
    std::vector<double> x, f, pi1, pi2, mapped;
    double x_hat{};
    double xi0{};       // wealth at the shadow price after the initial trade
    double pi_lo{}, pi_hi{};
    double value{};
    InitialTrade initial_trade;
    std::vector<double> r_roots;
    std::vector<std::string> warnings;
};

/// Portfolio fractions at one state, both forms of pi1 included for cross-checks.
struct Fractions {
    double pi1;         // x / (q g)
    double pi1_theta;   // ((1+q) theta1 - x s1 / g) / (s1 + sigma1)
    double pi2;
};

inline Fractions fractions(double x, double g, double gp, const DerivedConstants& dc) {
    const StateCoeffs c = state_coefficients(x, g, gp, dc);
    const double q = dc.q;
    const double s1 = c.s1g * gp, s2 = c.s2g * gp;
    Fractions fr{};
    fr.pi1 = x / (q * g);
    fr.pi1_theta = ((1 + q) * c.theta1 - x * s1 / g) / (s1 + dc.params.sigma1);
    fr.pi2 = ((1 + q) * c.theta2 - x * s2 / g - fr.pi1 * s2) / dc.params.sigma2;
    return fr;
}

/// Physical fraction of wealth in the illiquid asset when it is valued at S1 instead of the shadow price.
inline double mapped_fraction(double pi1, double f) { return pi1 / (pi1 + (1 - pi1) * std::exp(f)); }

inline double shadow_wealth(double f, const MarketParams& m) {
    return m.eta0 + m.eta1 * m.s1_0 * std::exp(f) + m.eta2 * m.s2_0;
}

/// No-trade band in terms of the physical illiquid fraction.
inline std::pair<double, double> no_trade_band(const FreeBoundarySolution& sol) {
    const auto& dc = sol.constants();
    const auto& m = dc.params;
    auto band_end = [&](double x, double g, double factor) {
        const double p1 = x / (dc.q * g);
        const double den = p1 + factor * (1 - p1);
        if (std::abs(den) <= 1e-14 * (std::abs(p1) + factor * std::abs(1 - p1)))
            throw NumericalError(Failure::Singularity, "band denominator vanishes at x = " + std::to_string(x));
        return p1 / den;
    };
    return {band_end(sol.x_lo(), sol.g().front(), 1 + m.lambda_buy),
            band_end(sol.x_hi(), sol.g().back(), 1 - m.lambda_sell)};
}

inline double value_at(double xi, double g, const DerivedConstants& dc) {
    if (!(xi > 0)) throw NumericalError(Failure::NonpositiveWealth, "initial shadow wealth is not positive");
    const double p = dc.params.p;
    return std::pow(xi, p) / p * std::pow(std::abs(g), 1 - p);
}

/// Closed-form value without costs: xi^p/p |y_M|^(1-p), where |y_M| = (1-p)/gap.
inline double frictionless_value(double xi, const DerivedConstants& dc) { return value_at(xi, dc.y_M, dc); }

inline PolicySurface build_policy(const FreeBoundarySolution& sol) {
    const auto& dc = sol.constants();
    const auto& m = dc.params;
    const std::size_t n = sol.size();
    PolicySurface P;
    P.x = sol.x();
    P.f.resize(n);
    P.pi1.resize(n);
    P.pi2.resize(n);
    P.mapped.resize(n);
    std::vector<double> r(n);
    const double G = sol.total_integral();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = sol.x()[i], g = sol.g()[i], gp = sol.g_prime()[i];
        P.f[i] = dc.y_lo + (G - sol.cum_integral()[i]);
        const Fractions fr = fractions(x, g, gp, dc);
        P.pi1[i] = fr.pi1;
        P.pi2[i] = fr.pi2;
        P.mapped[i] = mapped_fraction(fr.pi1, P.f[i]);
        r[i] = m.eta1 * m.s1_0 * std::exp(P.f[i]) - shadow_wealth(P.f[i], m) * fr.pi1;
    }
    // pin the ends exactly: f(x_lo) = ln(1+lambda_buy), f(x_hi) = ln(1-lambda_sell)
    P.f.front() = dc.y_hi;
    P.f.back() = dc.y_lo;

    auto r_at = [&](double x) {
        const double f = sol.f_at(x);
        return m.eta1 * m.s1_0 * std::exp(f) - shadow_wealth(f, m) * x / (dc.q * sol.g_at(x));
    };
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (r[i] == 0) {
            P.r_roots.push_back(P.x[i]);
        } else if (r[i] * r[i + 1] < 0) {
            boost::uintmax_t it = 200;
            const auto br = boost::math::tools::toms748_solve(r_at, P.x[i], P.x[i + 1], r[i], r[i + 1],
                                                              boost::math::tools::eps_tolerance<double>(40), it);
            P.r_roots.push_back(0.5 * (br.first + br.second));
        }
    }
    if (r.back() == 0) P.r_roots.push_back(P.x.back());

    if (P.r_roots.empty()) {
        P.x_hat = r.front() > 0 ? sol.x_hi() : sol.x_lo();
    } else {
        P.x_hat = P.r_roots.front();
        if (P.r_roots.size() > 1)
            P.warnings.push_back("r has " + std::to_string(P.r_roots.size()) +
                                 " roots; using the leftmost");
    }

    const double f_hat = P.x_hat == sol.x_hi() ? dc.y_lo : P.x_hat == sol.x_lo() ? dc.y_hi : sol.f_at(P.x_hat);
    const double g_hat = sol.g_at(P.x_hat);
    P.xi0 = shadow_wealth(f_hat, m);
    const double phi1 = P.x_hat / (dc.q * g_hat) * P.xi0 / (m.s1_0 * std::exp(f_hat));
    P.initial_trade.shares = P.r_roots.empty() ? phi1 - m.eta1 : 0.0;
    P.initial_trade.kind = P.r_roots.empty() ? (r.front() > 0 ? TradeKind::SellToUpper : TradeKind::BuyToLower)
                                             : TradeKind::None;

    const auto band = no_trade_band(sol);
    P.pi_lo = band.first;
    P.pi_hi = band.second;
    P.value = value_at(P.xi0, g_hat, dc);
    return P;
}

struct AsymptoticCoeffs {
    double zeta0;               // frictionless fraction (1+q) m / ((1-rho^2) sigma1^2)
    double zeta1;
    double zeta0_unnormalized;  // same without the sigma1^2 factor
    double zeta1_rho0;          // uncorrelated simplification, evaluated at the given mu, sigma
    double zeta1_single;        // one-illiquid-asset coefficient
};

inline double zeta1_general(const MarketParams& m) {
    const double q = m.p / (1 - m.p), q1 = 1 + q, r = m.rho;
    const double s1 = m.sigma1, s2 = m.sigma2, mu1 = m.mu1, mu2 = m.mu2;
    const double k = mu1 - r * s1 * mu2 / s2;
    const double inner = q1 * q1 * s1 * s1 * mu2 * mu2 - 2 * r * q1 * q1 * s1 * s2 * mu1 * mu2
                         + (q1 * q1 * mu1 * mu1 + (2 * q1 * mu1 - s1 * s1) * (r * r - 1) * s1 * s1) * s2 * s2;
    return std::cbrt(3 * q1 * q1 * q1 * k * k * inner / (4 * std::pow(1 - r * r, 4) * std::pow(s1, 8) * s2 * s2));
}

inline AsymptoticCoeffs asymptotic_coeffs(const MarketParams& m) {
    const double q = m.p / (1 - m.p), q1 = 1 + q;
    const double s1 = m.sigma1, s2 = m.sigma2, mu1 = m.mu1, mu2 = m.mu2;
    AsymptoticCoeffs a{};
    a.zeta0 = merton_fraction(m);
    a.zeta0_unnormalized = q1 * (mu1 - m.rho * s1 * mu2 / s2) / (1 - m.rho * m.rho);
    a.zeta1 = zeta1_general(m);
    const double single = 3 * mu1 * mu1 * q1 * q1 * q1 * std::pow(q1 * mu1 - s1 * s1, 2) / (4 * std::pow(s1, 8));
    a.zeta1_rho0 = std::cbrt(3 * mu1 * mu1 * mu2 * mu2 * std::pow(q1, 5) / (4 * std::pow(s1, 6) * s2 * s2) + single);
    a.zeta1_single = std::cbrt(single);
    return a;
}

} // namespace illiquid
