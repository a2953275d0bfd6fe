#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "illiquid/coeffs.hpp"
#include "illiquid/errors.hpp"
#include "illiquid/model.hpp"

namespace illiquid {

struct SolverOptions {
    double shoot_tol = 1e-10;   // on |G(a) - band width|
    int max_iter = 200;
    double rtol = 1e-12;
    double atol = 1e-13;
    double step_divisor = 16;   // max step in ln|x| is (expected span) / step_divisor
    std::size_t grid_points = 2001;
};

/// Result of one integration from a trial start point.
struct Shot {
    double a{};      // start, on the boundary curve
    double b{};      // first return to C = 0
    double g_b{};    // g(b)
    double G{};      // integral of g'/x over the traversed interval (>= 0)
    int steps{};
};

namespace detail {

using State = std::array<double, 2>; // (g, accumulated integral)

struct Rhs {
    const DerivedConstants* dc;
    double side;
    void operator()(const State& s, State& ds, double u) const {
        const double x = side * std::exp(u);
        const double F = f_rhs(x, s[0], *dc);
        ds[0] = x * F;
        ds[1] = side * F;
    }
};

struct TracePoint {
    double u, g, G;
};

/// Integrates g' = F in u = ln|x| away from 0 starting at a with g(a) = Gamma(a),
/// stops at the first crossing of C = 0. If `targets` (ascending u) is given, the
/// dense output is sampled there.
inline Shot integrate(double a, const DerivedConstants& dc, const SolverOptions& opt,
                      const std::vector<double>* targets = nullptr,
                      std::vector<TracePoint>* trace = nullptr) {
    namespace oi = boost::numeric::odeint;
    const double side = dc.side;
    const double u0 = std::log(std::abs(a));
    const double v = std::log(std::abs(dc.x_M) / std::abs(a));
    if (!(v > 0))
        throw NumericalError(Failure::OutOfDomain, "start point must lie strictly between 0 and x_M");
    const double max_dt = v / opt.step_divisor;
    const double u_limit = u0 + std::max(8.0, 64.0 * v); // far beyond any return point

    Rhs rhs{&dc, side};
    auto stepper = oi::make_dense_output(opt.atol, opt.rtol, max_dt, oi::runge_kutta_dopri5<State>());
    stepper.initialize(State{gamma_curve(a, dc), 0.0}, u0, max_dt / 64);

    auto C_at = [&](double u, const State& s) { return dc.C(side * std::exp(u), s[0]); };
    std::size_t next = 0;
    auto emit_until = [&](double u_end) {
        if (!targets) return;
        State s;
        while (next < targets->size() && (*targets)[next] <= u_end) {
            const double u = std::max((*targets)[next], stepper.previous_time());
            stepper.calc_state(u, s);
            trace->push_back({(*targets)[next], s[0], s[1]});
            ++next;
        }
    };

    bool inside = false;
    int steps = 0;
    for (;;) {
        const auto [t0, t1] = stepper.do_step(rhs);
        ++steps;
        const State& s = stepper.current_state();
        const double x1 = side * std::exp(t1);
        const double c1 = C_at(t1, s);
        if (!std::isfinite(s[0]))
            throw NumericalError(Failure::NumericalBreakdown, "non-finite g during integration");

        if (c1 > 0) {
            inside = true;
            const Positivity pos = positivity(x1, s[0], f_rhs(x1, s[0], dc), dc);
            if (!pos.ok())
                throw NumericalError(Failure::RegionExit,
                                     std::string(pos.first_failure()) + " <= 0 at x = " + std::to_string(x1));
            emit_until(t1);
        } else if (inside) {
            double ub = t1;
            if (c1 < 0) {
                State tmp;
                auto h = [&](double u) {
                    stepper.calc_state(u, tmp);
                    return C_at(u, tmp);
                };
                boost::uintmax_t it = 200;
                const auto r = boost::math::tools::toms748_solve(
                    h, t0, t1, h(t0), c1, boost::math::tools::eps_tolerance<double>(52), it);
                ub = 0.5 * (r.first + r.second);
            }
            State sb;
            stepper.calc_state(ub, sb);
            emit_until(ub);
            if (targets)
                while (next < targets->size()) trace->push_back({(*targets)[next++], sb[0], sb[1]});
            return {a, side * std::exp(ub), sb[0], sb[1], steps};
        } else if (steps > 8) {
            throw NumericalError(Failure::RegionExit, "trajectory did not enter C > 0 from a = " + std::to_string(a));
        }
        if (t1 > u_limit || steps > 2000000)
            throw NumericalError(Failure::EventNotFound,
                                 "no return to C = 0 before |x| = " + std::to_string(std::exp(t1)));
    }
}

inline double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
    const double h = x1 - x0, t = (x - x0) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1;
}

} // namespace detail

/// Integrate from a single trial start point (no constraint imposed).
inline Shot integrate_from(double a, const DerivedConstants& dc, const SolverOptions& opt = {}) {
    return detail::integrate(a, dc, opt);
}

/// Shooting functional as a function of v = ln(|x_M| / |a|).
inline Shot shot_at(double v, const DerivedConstants& dc, const SolverOptions& opt) {
    return integrate_from(dc.side * std::abs(dc.x_M) * std::exp(-v), dc, opt);
}

class FreeBoundarySolution {
public:
    FreeBoundarySolution() = default;

    FreeBoundarySolution(DerivedConstants dc, double shoot_param, std::vector<double> x, std::vector<double> g,
                         std::vector<double> cum)
        : dc_(std::move(dc)), shoot_param_(shoot_param), x_(std::move(x)), g_(std::move(g)), cum_(std::move(cum)) {
        gp_.resize(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) gp_[i] = f_rhs(x_[i], g_[i], dc_);
        // endpoints sit on C = 0 where g' vanishes; drop the round-off
        gp_.front() = 0.0;
        gp_.back() = 0.0;
    }

    const DerivedConstants& constants() const noexcept { return dc_; }
    Regime regime() const noexcept { return dc_.regime; }
    double x_lo() const noexcept { return x_.front(); }
    double x_hi() const noexcept { return x_.back(); }
    double shoot_param() const noexcept { return shoot_param_; }
    double total_integral() const noexcept { return cum_.back(); }
    std::size_t size() const noexcept { return x_.size(); }

    const std::vector<double>& x() const noexcept { return x_; }
    const std::vector<double>& g() const noexcept { return g_; }
    const std::vector<double>& g_prime() const noexcept { return gp_; }
    const std::vector<double>& cum_integral() const noexcept { return cum_; }

    double g_at(double x) const {
        const std::size_t i = cell(x);
        return detail::hermite(x_[i], x_[i + 1], g_[i], g_[i + 1], gp_[i], gp_[i + 1], x);
    }
    double gp_at(double x) const {
        if (x <= x_.front() || x >= x_.back()) return 0.0;
        return f_rhs(x, g_at(x), dc_);
    }
    double cum_at(double x) const {
        const std::size_t i = cell(x);
        return detail::hermite(x_[i], x_[i + 1], cum_[i], cum_[i + 1], gp_[i] / x_[i], gp_[i + 1] / x_[i + 1], x);
    }
    /// log of shadow price over ask/bid base: ln(1 - lambda_sell) + integral from x to x_hi.
    double f_at(double x) const { return dc_.y_lo + (total_integral() - cum_at(x)); }

private:
    std::size_t cell(double x) const {
        if (x <= x_.front()) return 0;
        if (x >= x_.back()) return x_.size() - 2;
        return static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    }

    DerivedConstants dc_;
    double shoot_param_{};
    std::vector<double> x_, g_, gp_, cum_;
};

/// Re-integrates from the converged start point and samples g and the running
/// integral on a cosine-clustered grid over the solved interval.
inline FreeBoundarySolution trace(double a, const DerivedConstants& dc, const SolverOptions& opt) {
    const Shot s = integrate_from(a, dc, opt);
    const double lo = std::min(s.a, s.b), hi = std::max(s.a, s.b);
    const std::size_t n = std::max<std::size_t>(opt.grid_points, 3);
    const double pi = std::acos(-1.0);

    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i)
        xs[i] = lo + (hi - lo) * 0.5 * (1 - std::cos(pi * double(i) / double(n - 1)));
    xs.front() = lo;
    xs.back() = hi;

    // integration runs outward in |x|: ascending x for M+, descending for M-
    std::vector<double> us(n - 2);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        const std::size_t i = dc.m_positive() ? k + 1 : n - 2 - k;
        us[k] = std::log(std::abs(xs[i]));
    }
    std::vector<detail::TracePoint> tp;
    tp.reserve(n);
    const Shot s2 = detail::integrate(a, dc, opt, &us, &tp);
    if (s2.b != s.b)
        throw NumericalError(Failure::NumericalBreakdown, "trace pass diverged from the shooting pass");

    std::vector<double> g(n), cum(n);
    const double G = s.G;
    auto put = [&](std::size_t i, double gv, double Gv) {
        g[i] = gv;
        cum[i] = dc.m_positive() ? Gv : G - Gv; // running integral from x_lo
    };
    put(dc.m_positive() ? 0 : n - 1, gamma_curve(a, dc), 0.0);
    put(dc.m_positive() ? n - 1 : 0, s.g_b, G);
    for (std::size_t k = 0; k < tp.size(); ++k) put(dc.m_positive() ? k + 1 : n - 2 - k, tp[k].g, tp[k].G);
    return FreeBoundarySolution(dc, a, std::move(xs), std::move(g), std::move(cum));
}

/// Solves the free-boundary problem: finds a with G(a) = band width and returns the traced solution.
inline FreeBoundarySolution shoot(const DerivedConstants& dc, const SolverOptions& opt = {}) {
    const double w = dc.band_width;
    if (!(w > 0)) throw NumericalError(Failure::BracketingFailed, "band width must be positive");

    auto G = [&](double v) {
        try {
            return shot_at(v, dc, opt).G;
        } catch (const NumericalError& e) {
            throw NumericalError(Failure::BracketingFailed, std::string("while bracketing: ") + e.what());
        }
    };

    double lo = 0, hi = 0, v = 0.1;
    double Gv = G(v);
    if (Gv < w) {
        lo = v;
        while (Gv < w) {
            v *= 2;
            if (v > 700) throw NumericalError(Failure::BracketingFailed, "G stays below the band width as a -> 0");
            Gv = G(v);
            if (Gv < w) lo = v;
        }
        hi = v;
    } else {
        hi = v;
        while (Gv >= w) {
            v *= 0.5;
            if (v < 1e-300) throw NumericalError(Failure::BracketingFailed, "G stays above the band width as a -> x_M");
            Gv = G(v);
            if (Gv >= w) hi = v;
        }
        lo = v;
    }

    double best_v = hi, best_err = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        const double Gm = shot_at(mid, dc, opt).G;
        const double err = std::abs(Gm - w);
        if (err < best_err) best_err = err, best_v = mid;
        if (err <= opt.shoot_tol) break;
        (Gm < w ? lo : hi) = mid;
    }
    if (!(best_err <= opt.shoot_tol)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "best |G - width| = %.3e exceeds tolerance %.3e", best_err, opt.shoot_tol);
        throw NumericalError(Failure::ToleranceNotMet, buf);
    }
    return trace(dc.side * std::abs(dc.x_M) * std::exp(-best_v), dc, opt);
}

inline FreeBoundarySolution shoot(const DerivedConstants& dc, double band_width, double tol) {
    if (std::abs(band_width - dc.band_width) > 1e-15 * std::max(1.0, band_width))
        throw ConfigError("band width does not match the cost parameters");
    SolverOptions opt;
    opt.shoot_tol = tol;
    return shoot(dc, opt);
}

inline double ode_residual(const FreeBoundarySolution& sol) {
    double r = 0;
    for (std::size_t i = 0; i < sol.size(); ++i)
        r = std::max(r, ode_residual_at(sol.x()[i], sol.g()[i], sol.g_prime()[i], sol.constants()));
    return r;
}

inline void write_csv(const FreeBoundarySolution& sol, std::ostream& os) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "# x_lo=%.17g\n# x_hi=%.17g\n# shoot_param=%.17g\n", sol.x_lo(), sol.x_hi(),
                  sol.shoot_param());
    os << buf << "# regime=" << to_string(sol.regime()) << "\nx,g,g_prime,cum_integral\n";
    for (std::size_t i = 0; i < sol.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", sol.x()[i], sol.g()[i], sol.g_prime()[i],
                      sol.cum_integral()[i]);
        os << buf;
    }
}

/// Reads a solution written by write_csv. The constants must come from the same parameters.
inline FreeBoundarySolution read_csv(std::istream& is, const DerivedConstants& dc) {
    std::string line, regime;
    double shoot_param = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> x, g, cum;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            const std::string val = line.substr(eq + 1);
            if (key == "regime") regime = val;
            if (key == "shoot_param") shoot_param = std::stod(val);
            continue;
        }
        if (!header) {
            if (line != "x,g,g_prime,cum_integral") throw ConfigError("unexpected solution header: " + line);
            header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string f[4];
        for (auto& s : f)
            if (!std::getline(ss, s, ',')) throw ConfigError("short row in solution file");
        x.push_back(std::stod(f[0]));
        g.push_back(std::stod(f[1]));
        cum.push_back(std::stod(f[3]));
    }
    if (x.size() < 3) throw ConfigError("solution file has fewer than 3 rows");
    if (regime_from_string(regime) != dc.regime) throw ConfigError("solution regime does not match parameters");
    return FreeBoundarySolution(dc, shoot_param, std::move(x), std::move(g), std::move(cum));
}

} // namespace illiquid
