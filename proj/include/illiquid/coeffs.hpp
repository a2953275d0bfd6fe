#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "illiquid/errors.hpp"
#include "illiquid/model.hpp"

namespace illiquid {

struct QuadCoeffs {
    double a, b, c;
    double disc; // b^2 - 4ac, clamped at 0 when the negative part is round-off
};

/// Magnitude used to judge round-off in A, B, C near (x, y).
inline double abc_scale(double x, double y, const DerivedConstants& dc) {
    const double ax = std::abs(x), ay = std::abs(y);
    double s = 0;
    for (const Conic* k : {&dc.A, &dc.B, &dc.C})
        s = std::max(s, std::abs(k->cx) * ax + std::abs(k->cy) * ay + std::abs(k->cxx) * ax * ax
                            + std::abs(k->cxy) * ax * ay + std::abs(k->cyy) * ay * ay);
    return s;
}

inline QuadCoeffs abc(double x, double y, const DerivedConstants& dc) {
    QuadCoeffs r{dc.A(x, y), dc.B(x, y), dc.C(x, y), 0.0};
    r.disc = r.b * r.b - 4.0 * r.a * r.c;
    if (r.disc < 0) {
        const double s = abc_scale(x, y, dc);
        if (r.disc > -1e-13 * s * s) r.disc = 0.0;
    }
    return r;
}

/// Branch of C(x, y) = 0 through the Merton vertex.
inline double gamma_curve(double x, const DerivedConstants& dc) {
    const Conic& c = dc.C;
    const double b = c.cy + c.cxy * x;
    const double rad = b * b - 4.0 * c.cyy * c.cxx * x * x;
    if (!(rad >= 0))
        throw NumericalError(Failure::OutOfDomain, "boundary curve undefined at x = " + std::to_string(x));
    return (-b - std::sqrt(rad)) / (2.0 * c.cyy);
}

inline double gamma_slope(double x, const DerivedConstants& dc) {
    const double y = gamma_curve(x, dc);
    return -dc.C.dx(x, y) / dc.C.dy(x, y);
}

/// Right-hand side g' = F(x, g). The root is the "+sqrt" form 2C/(-B+sqrt) when the
/// illiquid excess drift is positive and the "-sqrt" form otherwise; each form is
/// evaluated through whichever algebraically equal expression avoids cancellation.
inline double f_rhs(double x, double y, const DerivedConstants& dc) {
    const QuadCoeffs k = abc(x, y, dc);
    const double r = std::sqrt(k.disc);
    double v;
    if (dc.m_positive())
        v = k.b <= 0 ? 2.0 * k.c / (-k.b + r) : (-k.b - r) / (2.0 * k.a);
    else
        v = k.b >= 0 ? 2.0 * k.c / (-k.b - r) : (-k.b + r) / (2.0 * k.a);
    if (!std::isfinite(v)) {
        // B = disc = 0 gives 0/0 with C = 0 as well; only the origin does that.
        if (k.b == 0 && k.disc == 0 && k.c == 0) return 0.0;
        throw NumericalError(Failure::NumericalBreakdown,
                             "F undefined at (" + std::to_string(x) + ", " + std::to_string(y) + ")");
    }
    return v;
}

/// g'' along the solution, by differentiating A t^2 + B t + C = 0 with t = F.
inline double f_rhs_derivative(double x, double y, const DerivedConstants& dc) {
    const double t = f_rhs(x, y, dc);
    const double a = dc.A(x, y), b = dc.B(x, y);
    const double ad = dc.A.dx(x, y) + t * dc.A.dy(x, y);
    const double bd = dc.B.dx(x, y) + t * dc.B.dy(x, y);
    const double cd = dc.C.dx(x, y) + t * dc.C.dy(x, y);
    return -(ad * t * t + bd * t + cd) / (2.0 * a * t + b);
}

/// The four quantities that must stay strictly positive on the solved interval.
struct Positivity {
    double qg;       // q g
    double den;      // q g (1 + g') - (1+q) x g'
    double qg_xgp;   // q (g - x g')
    double one_gp;   // 1 + g'

    bool ok() const noexcept { return qg > 0 && den > 0 && qg_xgp > 0 && one_gp > 0; }

    const char* first_failure() const noexcept {
        if (!(qg > 0)) return "q*g";
        if (!(den > 0)) return "q*g*(1+g')-(1+q)*x*g'";
        if (!(qg_xgp > 0)) return "q*(g-x*g')";
        if (!(one_gp > 0)) return "1+g'";
        return "";
    }
};

inline Positivity positivity(double x, double g, double gp, const DerivedConstants& dc) {
    const double q = dc.q;
    return {q * g, q * g * (1 + gp) - (1 + q) * x * gp, q * (g - x * gp), 1 + gp};
}

struct OptimizerValues {
    double m_hat, s1_hat, s2_hat;
    double theta1_hat, theta2_hat;
    double alpha_hat, beta_hat, gamma_hat;
};

namespace detail {

inline double theta1_of(double m, double s1, double s2, const MarketParams& p) {
    const double r2 = 1 - p.rho * p.rho;
    return p.rho * (p.sigma2 * s2 - p.mu2) / (r2 * p.sigma2)
           - (p.mu2 * s2 - (m + p.mu1 + s1 * p.sigma1 + 0.5 * (s1 * s1 + s2 * s2)) * p.sigma2)
                 / (r2 * p.sigma2 * (s1 + p.sigma1));
}

inline double rho_norm2(double a, double b, double rho) { return a * a + b * b + 2 * rho * a * b; }

} // namespace detail

/// Minimizers of the reduced HJB at (x, g, g') and the coefficients they induce.
inline OptimizerValues optimizers(double x, double g, double gp, const DerivedConstants& dc) {
    const Positivity pos = positivity(x, g, gp, dc);
    if (!pos.ok())
        throw NumericalError(Failure::PositivityViolated,
                             std::string(pos.first_failure()) + " <= 0 at x = " + std::to_string(x));
    const auto& p = dc.params;
    const double q = dc.q, r = p.rho, s1 = p.sigma1, s2 = p.sigma2;
    const double den = pos.den;

    OptimizerValues o{};
    o.s1_hat = gp * s1 * (x - q * g) / den;
    o.s2_hat = gp
               * (-r * s1 * s2 * x - (p.mu2 * (1 + q) * (1 + q) - q * r * s1 * s2) * x * gp
                  + q * (1 + q) * p.mu2 * g * (1 + gp))
               / (s2 * den * (1 + gp));
    const double a = o.s1_hat, b = o.s2_hat;
    o.m_hat = (2 * (1 - r * r) * s2 * (s1 + (1 + q) * a) * (s1 + a) * x
               + q * (1 + q)
                     * (2 * p.mu2 * (r * (s1 + a) + b)
                        - s2 * (2 * p.mu1 + 2 * s1 * a + a * a + 2 * r * (s1 + a) * b + b * b))
                     * g)
              / (2 * q * (1 + q) * s2 * g);
    o.theta1_hat = detail::theta1_of(o.m_hat, a, b, p);
    o.theta2_hat = p.mu2 / s2 - r * o.theta1_hat;
    o.alpha_hat = (1 + q) * p.delta
                  - 0.5 * q * (1 + q) * detail::rho_norm2(o.theta1_hat, o.theta2_hat, r);
    o.beta_hat = q * ((a + r * b) * o.theta1_hat + (r * a + b) * o.theta2_hat);
    o.gamma_hat = 0.5 * detail::rho_norm2(a, b, r);
    return o;
}

/// Coefficients of the state SDE with the g' factor cancelled symbolically, so
/// they stay finite at the endpoints where g' = 0.
struct StateCoeffs {
    double theta1, theta2;
    double theta_sq;   // theta1^2 + theta2^2 + 2 rho theta1 theta2
    double drift;      // x alpha + x beta / g'
    double diff1;      // -x s1 / g'
    double diff2;      // -x s2 / g'
    double s1g, s2g;   // s1 / g', s2 / g'
};

inline StateCoeffs state_coefficients(double x, double g, double gp, const DerivedConstants& dc) {
    const auto& p = dc.params;
    const double q = dc.q, r = p.rho, s1 = p.sigma1, s2 = p.sigma2;
    const double den = q * g * (1 + gp) - (1 + q) * x * gp;
    StateCoeffs c{};
    c.s1g = s1 * (x - q * g) / den;
    c.s2g = (-r * s1 * s2 * x - (p.mu2 * (1 + q) * (1 + q) - q * r * s1 * s2) * x * gp
             + q * (1 + q) * p.mu2 * g * (1 + gp))
            / (s2 * den * (1 + gp));
    c.theta1 = s1 * x * (1 - q * gp) / ((1 + q) * den);
    c.theta2 = p.mu2 / s2 - r * c.theta1;
    c.theta_sq = detail::rho_norm2(c.theta1, c.theta2, r);
    const double alpha = (1 + q) * p.delta - 0.5 * q * (1 + q) * c.theta_sq;
    const double beta_g = q * ((c.s1g + r * c.s2g) * c.theta1 + (r * c.s1g + c.s2g) * c.theta2);
    c.drift = x * alpha + x * beta_g;
    c.diff1 = -x * c.s1g;
    c.diff2 = -x * c.s2g;
    return c;
}

/// Residual of -alpha g - (m + beta) x + gamma x / g' + sgn(p). Near g' = 0 the
/// polynomial form (A g'^2 + B g' + C), divided by the same positive factor, is used.
inline double hjb_residual(double x, double g, double gp, const DerivedConstants& dc) {
    const double q = dc.q, s2 = dc.params.sigma2;
    if (std::abs(gp) < 1e-6 * std::max(1.0, std::abs(g / x))) {
        const QuadCoeffs k = abc(x, g, dc);
        const double den = q * g * (1 + gp) - (1 + q) * x * gp;
        return (k.a * gp * gp + k.b * gp + k.c) / (2 * (1 + q) * s2 * s2 * (1 + gp) * den);
    }
    const OptimizerValues o = optimizers(x, g, gp, dc);
    return -o.alpha_hat * g - (o.m_hat + o.beta_hat) * x + o.gamma_hat * x / gp + dc.sgn_p;
}

/// |A g'^2 + B g' + C| / (1 + |A| + |B| + |C|).
inline double ode_residual_at(double x, double g, double gp, const DerivedConstants& dc) {
    const double a = dc.A(x, g), b = dc.B(x, g), c = dc.C(x, g);
    return std::abs(a * gp * gp + b * gp + c) / (1 + std::abs(a) + std::abs(b) + std::abs(c));
}

} // namespace illiquid
