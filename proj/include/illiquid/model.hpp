#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "illiquid/errors.hpp"

namespace illiquid {

/// Market primitives and initial endowment. Rates are per year.
struct MarketParams {
    double mu1{};         ///< drift of the illiquid asset
    double sigma1{};      ///< volatility of the illiquid asset
    double mu2{};         ///< drift of the liquid asset
    double sigma2{};      ///< volatility of the liquid asset
    double rho{};         ///< correlation of the two Brownian drivers
    double delta{};       ///< impatience rate
    double p{};           ///< CRRA exponent, U(c) = c^p / p
    double lambda_buy{};  ///< proportional cost on purchases of the illiquid asset
    double lambda_sell{}; ///< proportional cost on sales of the illiquid asset
    double eta0{1.0};     ///< initial bond holding
    double eta1{0.0};     ///< initial illiquid shares
    double eta2{0.0};     ///< initial liquid shares
    double s1_0{1.0};
    double s2_0{1.0};
};

/// Sign pattern of (p, mu1 - rho*mu2*sigma1/sigma2). Drives curve branch and root choice.
enum class Regime { PplusMplus, PplusMminus, PminusMplus, PminusMminus };

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::PplusMplus: return "P+M+";
    case Regime::PplusMminus: return "P+M-";
    case Regime::PminusMplus: return "P-M+";
    case Regime::PminusMminus: return "P-M-";
    }
    return "?";
}

inline Regime regime_from_string(const std::string& s) {
    for (Regime r : {Regime::PplusMplus, Regime::PplusMminus, Regime::PminusMplus, Regime::PminusMminus})
        if (s == to_string(r)) return r;
    throw ConfigError("unknown regime tag '" + s + "'");
}

/// Quadratic form in (x, y) with no constant term:
/// x*(cx + cxx*x + cxy*y) + y*(cy + cyy*y).
struct Conic {
    double cx{}, cy{}, cxx{}, cxy{}, cyy{};

    double operator()(double x, double y) const noexcept {
        return x * (cx + cxx * x + cxy * y) + y * (cy + cyy * y);
    }
    double dx(double x, double y) const noexcept { return cx + 2.0 * cxx * x + cxy * y; }
    double dy(double x, double y) const noexcept { return cy + cxy * x + 2.0 * cyy * y; }
};

struct MertonPoint {
    double x_M;
    double y_M;
    double pi_star; ///< frictionless fraction of wealth in the illiquid asset
};

/// Constants derived once from validated parameters. Immutable.
struct DerivedConstants {
    MarketParams params;
    double q{};          ///< p / (1 - p)
    double sgn_p{};      ///< +1 or -1
    double y_lo{};       ///< ln(1 - lambda_sell)
    double y_hi{};       ///< ln(1 + lambda_buy)
    double band_width{}; ///< y_hi - y_lo
    Regime regime{};
    double side{};          ///< +1 if the solved interval lies in x > 0, -1 if in x < 0
    double excess_drift{};  ///< mu1 - rho*mu2*sigma1/sigma2
    double merton_gap{};    ///< delta minus the finite-value threshold (> 0)
    Conic A, B, C;          ///< coefficient polynomials of the reduced ODE
    double y_C{}, x_D{}, y_D{}, x_M{}, y_M{};

    bool p_positive() const noexcept { return sgn_p > 0; }
    bool m_positive() const noexcept { return side > 0; }
};

namespace detail {

inline double sharpe_quadratic(const MarketParams& m) {
    const double a = m.mu1 / m.sigma1, b = m.mu2 / m.sigma2;
    return a * a + b * b - 2.0 * m.rho * a * b;
}

/// Finite-value threshold on delta.
inline double delta_threshold(const MarketParams& m, double q) {
    return q / (2.0 * (1.0 - m.rho * m.rho)) * sharpe_quadratic(m);
}

inline bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

inline void fill_polynomials(DerivedConstants& dc) {
    const auto& m = dc.params;
    const double q = dc.q, s = dc.sgn_p, r = m.rho;
    const double s1 = m.sigma1, s2 = m.sigma2, m1 = m.mu1, m2 = m.mu2, d = m.delta;
    const double q1 = 1.0 + q, q1s = q1 * q1;
    const double s2s = s2 * s2, s1s = s1 * s1;
    const double lead = 2.0 * d * s2s - q * m2 * m2;

    dc.A.cx = -2.0 * q1s * s2s * s;
    dc.A.cxx = q1s * q1s * m2 * m2 - 2.0 * r * q * q1s * s1 * s2 * m2
               + ((1.0 + 2.0 * q + q * q * r * r) * s1s - 2.0 * q1s * m1) * s2s;
    dc.A.cy = q1 * 2.0 * q * s2s * s;
    dc.A.cxy = q1 * (2.0 * r * q * q * s1 * s2 * m2 - 2.0 * q * q1s * m2 * m2
                     + (2.0 * d * q1s + q * (2.0 * m1 - s1s)) * s2s);
    dc.A.cyy = -q * q1s * lead;

    dc.B.cx = -2.0 * q1s * s2s * s;
    dc.B.cxx = 2.0 * s2 * (r * s1 * m2 * q1s - (m1 * q1s - q * (1.0 - r * r) * s1s) * s2);
    dc.B.cy = q1 * 4.0 * q * s2s * s;
    dc.B.cxy = q1 * (2.0 * r * q * (q - 1.0) * s1 * s2 * m2 - 2.0 * q * q1s * m2 * m2
                     + (2.0 * d * q1s + q * (4.0 * m1 - s1s)) * s2s);
    dc.B.cyy = -2.0 * q * q1s * lead;

    dc.C.cx = 0.0;
    dc.C.cxx = -(1.0 - r * r) * s1s * s2s;
    dc.C.cy = 2.0 * q * q1 * s2s * s;
    dc.C.cxy = 2.0 * q * q1 * s2 * (m1 * s2 - r * m2 * s1);
    dc.C.cyy = -q * q1s * lead;
}

} // namespace detail

/// Vertex of the level curve C = 0: C(x_M, y_M) = 0 and dC/dx(x_M, y_M) = 0.
inline MertonPoint merton_point(const DerivedConstants& dc) {
    const Conic& c = dc.C;
    const double reduced = c.cyy - c.cxy * c.cxy / (4.0 * c.cxx);
    const double y = -c.cy / reduced;
    const double x = -c.cxy * y / (2.0 * c.cxx);
    return {x, y, x / (dc.q * y)};
}

/// Checks every admissibility clause; throws ValidationError listing all failures.
inline DerivedConstants validate(const MarketParams& m) {
    std::vector<Violation> bad;
    auto range = [&](bool ok, const char* field, const char* msg) {
        if (!ok) bad.push_back({Clause::ParameterRange, field, msg});
    };
    auto fin = [](double v) { return std::isfinite(v); };

    range(fin(m.mu1) && m.mu1 > 0, "mu1", "must be > 0");
    range(fin(m.sigma1) && m.sigma1 > 0, "sigma1", "must be > 0");
    range(fin(m.mu2) && m.mu2 > 0, "mu2", "must be > 0");
    range(fin(m.sigma2) && m.sigma2 > 0, "sigma2", "must be > 0");
    range(fin(m.rho) && m.rho > -1 && m.rho < 1, "rho", "must lie in (-1, 1)");
    range(fin(m.delta) && m.delta > 0, "delta", "must be > 0");
    range(fin(m.p) && m.p < 1 && m.p != 0, "p", "must lie in (-inf, 1) \\ {0}");
    range(fin(m.lambda_buy) && m.lambda_buy >= 0, "lambda_buy", "must be >= 0");
    range(fin(m.lambda_sell) && m.lambda_sell >= 0 && m.lambda_sell < 1, "lambda_sell",
          "must lie in [0, 1)");
    range(fin(m.eta0), "eta0", "must be finite");
    range(fin(m.eta1), "eta1", "must be finite");
    range(fin(m.eta2), "eta2", "must be finite");
    range(fin(m.s1_0) && m.s1_0 > 0, "s1_0", "must be > 0");
    range(fin(m.s2_0) && m.s2_0 > 0, "s2_0", "must be > 0");
    if (!bad.empty()) throw ValidationError(std::move(bad));

    if (m.lambda_buy == 0 && m.lambda_sell == 0)
        bad.push_back({Clause::DegenerateLiquidity, "", "both costs are zero; use the frictionless solution"});

    const double liquidation = m.eta0 + (1 - m.lambda_sell) * m.s1_0 * std::max(m.eta1, 0.0)
                               - (1 + m.lambda_buy) * m.s1_0 * std::max(-m.eta1, 0.0) + m.s2_0 * m.eta2;
    if (liquidation < 0)
        bad.push_back({Clause::InitialWealth, "", "initial liquidation value is negative"});

    const double q = m.p / (1 - m.p);
    const double thr = detail::delta_threshold(m, q);
    if (!(m.delta > thr))
        bad.push_back({Clause::DiscountRate, "delta",
                       "must exceed " + std::to_string(thr) + " for a finite value"});
    const double hedge = m.rho * m.mu2 * m.sigma1 / m.sigma2;
    if (detail::nearly_equal(m.mu1, hedge))
        bad.push_back({Clause::HedgeDegenerate, "mu1", "mu1 equals rho*mu2*sigma1/sigma2"});
    if (detail::nearly_equal(m.mu2, m.rho * m.sigma1 * m.sigma2 / (1 + q)))
        bad.push_back({Clause::LiquidDegenerate, "mu2", "mu2 equals rho*sigma1*sigma2/(1+q)"});
    if (!bad.empty()) throw ValidationError(std::move(bad));

    DerivedConstants dc;
    dc.params = m;
    dc.q = q;
    dc.sgn_p = m.p > 0 ? 1.0 : -1.0;
    dc.y_lo = std::log1p(-m.lambda_sell);
    dc.y_hi = std::log1p(m.lambda_buy);
    dc.band_width = dc.y_hi - dc.y_lo;
    dc.excess_drift = m.mu1 - hedge;
    dc.side = dc.excess_drift > 0 ? 1.0 : -1.0;
    dc.merton_gap = m.delta - thr;
    dc.regime = dc.p_positive() ? (dc.m_positive() ? Regime::PplusMplus : Regime::PplusMminus)
                                : (dc.m_positive() ? Regime::PminusMplus : Regime::PminusMminus);
    detail::fill_polynomials(dc);

    const double lead = 2.0 * m.delta * m.sigma2 * m.sigma2 - q * m.mu2 * m.mu2;
    dc.y_C = 2.0 * m.sigma2 * m.sigma2 * dc.sgn_p / ((1 + q) * lead);
    const double dden = 2.0 * m.delta * (1 + q) * (1 + q) + q * (m.sigma1 * m.sigma1 - 2.0 * (1 + q) * m.mu1);
    dc.x_D = 2.0 * q * (1 + q) * dc.sgn_p / dden;
    dc.y_D = 2.0 * (1 + q) * dc.sgn_p / dden;

    const MertonPoint mp = merton_point(dc);
    dc.x_M = mp.x_M;
    dc.y_M = mp.y_M;
    return dc;
}

/// Frictionless fraction of wealth in the illiquid asset.
inline double merton_fraction(const MarketParams& m) {
    const double q = m.p / (1 - m.p);
    return (1 + q) * (m.mu1 - m.rho * m.sigma1 * m.mu2 / m.sigma2)
           / ((1 - m.rho * m.rho) * m.sigma1 * m.sigma1);
}

} // namespace illiquid
