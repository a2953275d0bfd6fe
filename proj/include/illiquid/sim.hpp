#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <boost/random/mersenne_twister.hpp>
#include <thread>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "illiquid/coeffs.hpp"
#include "illiquid/errors.hpp"
#include "illiquid/fbsolver.hpp"
#include "illiquid/policy.hpp"

namespace illiquid {

struct SimConfig {
    double horizon = 1.0;
    std::size_t n_steps = 1000;
    std::size_t n_paths = 100;
    std::uint64_t seed = 20240601;
    unsigned threads = 1;
    bool antithetic = true;         // paths 2k and 2k+1 share |Z| with opposite signs
    std::size_t table_nodes = 16385;

    double dt() const { return horizon / double(n_steps); }
};

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// SDE coefficients on a uniform x grid, linearly interpolated in the hot loop.
class CoefficientTable {
public:
    struct Node {
        double drift, diff1, diff2, theta1, theta2, half_theta_sq;
    };

    CoefficientTable(const FreeBoundarySolution& sol, std::size_t nodes)
        : lo_(sol.x_lo()), hi_(sol.x_hi()) {
        nodes = std::max<std::size_t>(nodes, 2);
        h_ = (hi_ - lo_) / double(nodes - 1);
        inv_h_ = 1.0 / h_;
        n_.resize(nodes + 1);
        for (std::size_t i = 0; i < nodes; ++i) {
            const double x = i + 1 == nodes ? hi_ : lo_ + h_ * double(i);
            const StateCoeffs c = state_coefficients(x, sol.g_at(x), sol.gp_at(x), sol.constants());
            n_[i] = {c.drift, c.diff1, c.diff2, c.theta1, c.theta2, 0.5 * c.theta_sq};
        }
        n_[nodes] = n_[nodes - 1]; // guard for x == hi
    }

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

    Node operator()(double x) const noexcept {
        const double s = (x - lo_) * inv_h_;
        std::size_t i = static_cast<std::size_t>(s);
        if (i >= n_.size() - 1) i = n_.size() - 2;
        const double w = s - double(i);
        const Node& a = n_[i];
        const Node& b = n_[i + 1];
        return {a.drift + w * (b.drift - a.drift),
                a.diff1 + w * (b.diff1 - a.diff1),
                a.diff2 + w * (b.diff2 - a.diff2),
                a.theta1 + w * (b.theta1 - a.theta1),
                a.theta2 + w * (b.theta2 - a.theta2),
                a.half_theta_sq + w * (b.half_theta_sq - a.half_theta_sq)};
    }

private:
    double lo_, hi_, h_, inv_h_;
    std::vector<Node> n_;
};

namespace detail {

/// Normal pairs for one antithetic pair of paths (or one plain path).
class NormalStream {
public:
    NormalStream(std::uint64_t seed) : eng_(seed) {}
    double operator()() { return nd_(eng_); }

private:
    boost::random::mt19937_64 eng_;
    boost::random::normal_distribution<double> nd_;
};

/// Runs body(k) for k in [0, n) over `threads` workers; each k is handled by one worker.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body body) {
    threads = std::max(1u, std::min<unsigned>(threads, unsigned(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t k = 0; k < n; ++k) body(k);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t k = t; k < n; k += threads) body(k);
        });
    for (auto& th : pool) th.join();
}

struct Step {
    double dB1, dB2;
};

} // namespace detail

/// One Euler step with projection onto [lo, hi]. Returns the pushes (up, down).
inline std::pair<double, double> euler_reflect(double& x, double& lnH, const CoefficientTable::Node& c,
                                               detail::Step dB, double dt, double lo, double hi) {
    lnH += -c.theta1 * dB.dB1 - c.theta2 * dB.dB2 - c.half_theta_sq * dt;
    double xn = x + c.drift * dt + c.diff1 * dB.dB1 + c.diff2 * dB.dB2;
    double up = 0, down = 0;
    if (xn < lo) up = lo - xn, xn = lo;
    else if (xn > hi) down = xn - hi, xn = hi;
    x = xn;
    return {up, down};
}

struct SimulatedPath {
    std::vector<double> t, X, phi_up, phi_down, B1, B2, S1, S2, S_tilde, H, W, c, phi0, phi1, phi2;
};

/// Exact evaluation of g, f and the fractions at a state, for path reconstruction.
struct StateView {
    double g, f, pi1, pi2;
};

inline StateView view_at(const FreeBoundarySolution& sol, double x) {
    const auto& dc = sol.constants();
    const double g = sol.g_at(x);
    double f = x <= sol.x_lo() ? dc.y_hi : x >= sol.x_hi() ? dc.y_lo : sol.f_at(x);
    f = std::clamp(f, dc.y_lo, dc.y_hi);
    const Fractions fr = fractions(x, g, sol.gp_at(x), dc);
    return {g, f, fr.pi1, fr.pi2};
}

inline double shadow_price(double s1, double f, const MarketParams& m) {
    // f lies in [ln(1-lambda_sell), ln(1+lambda_buy)]; clamp away the exp round-off
    return std::clamp(s1 * std::exp(f), (1 - m.lambda_sell) * s1, (1 + m.lambda_buy) * s1);
}

namespace detail {

/// Generates path k's Brownian increments. Antithetic partner paths flip the sign.
class PathNoise {
public:
    PathNoise(const SimConfig& cfg, std::size_t k, double rho)
        : ns_(stream_seed(cfg.seed, cfg.antithetic ? k / 2 : k)),
          sign_(cfg.antithetic && (k % 2) ? -1.0 : 1.0),
          sq_(std::sqrt(cfg.dt())), rho_(rho), rc_(std::sqrt(1 - rho * rho)) {}

    Step next() {
        const double z1 = ns_(), z2 = ns_();
        const double b1 = sign_ * sq_ * z1;
        return {b1, sign_ * sq_ * (rho_ * z1 + rc_ * z2)};
    }

private:
    NormalStream ns_;
    double sign_, sq_, rho_, rc_;
};

} // namespace detail

/// Simulates cfg.n_paths full trajectories started at x_hat.
inline std::vector<SimulatedPath> simulate(const PolicySurface& pol, const FreeBoundarySolution& sol,
                                           const SimConfig& cfg) {
    const auto& dc = sol.constants();
    const auto& m = dc.params;
    const CoefficientTable tab(sol, cfg.table_nodes);
    const double dt = cfg.dt(), q = dc.q;
    const double g_hat = sol.g_at(pol.x_hat);

    std::vector<SimulatedPath> out(cfg.n_paths);
    detail::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t k) {
        detail::PathNoise noise(cfg, k, m.rho);
        SimulatedPath P;
        const std::size_t n = cfg.n_steps + 1;
        for (auto* v : {&P.t, &P.X, &P.phi_up, &P.phi_down, &P.B1, &P.B2, &P.S1, &P.S2, &P.S_tilde, &P.H, &P.W,
                        &P.c, &P.phi0, &P.phi1, &P.phi2})
            v->reserve(n);
        double x = pol.x_hat, lnH = 0, up = 0, down = 0, b1 = 0, b2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = dt * double(i);
            if (i > 0) {
                const detail::Step s = noise.next();
                const auto push = euler_reflect(x, lnH, tab(x), s, dt, tab.lo(), tab.hi());
                up += push.first;
                down += push.second;
                b1 += s.dB1;
                b2 += s.dB2;
            }
            const StateView v = view_at(sol, x);
            const double s1 = m.s1_0 * std::exp((m.mu1 - 0.5 * m.sigma1 * m.sigma1) * t + m.sigma1 * b1);
            const double s2 = m.s2_0 * std::exp((m.mu2 - 0.5 * m.sigma2 * m.sigma2) * t + m.sigma2 * b2);
            const double st = shadow_price(s1, v.f, m);
            const double W = pol.xi0 * std::exp(-(1 + q) * m.delta * t - (1 + q) * lnH) * v.g / g_hat;
            P.t.push_back(t);
            P.X.push_back(x);
            P.phi_up.push_back(up);
            P.phi_down.push_back(down);
            P.B1.push_back(b1);
            P.B2.push_back(b2);
            P.S1.push_back(s1);
            P.S2.push_back(s2);
            P.S_tilde.push_back(st);
            P.H.push_back(std::exp(lnH));
            P.W.push_back(W);
            P.c.push_back(W / std::abs(v.g));
            P.phi0.push_back((1 - v.pi1 - v.pi2) * W);
            P.phi1.push_back(v.pi1 * W / st);
            P.phi2.push_back(v.pi2 * W / s2);
        }
        out[k] = std::move(P);
    });
    return out;
}

struct GEstimate {
    double estimate{};
    double stderr_{};
    double target{};
    double z{};             // |estimate - target| / stderr
    double tail{};          // estimated truncated remainder, E[e^{-(1+q) delta T} H_T^{-q} |g(X_T)|]
    double var_half{};      // sample variance of the integrand at T/2
    double var_end{};       // and at T
    std::size_t samples{};  // independent samples (pairs when antithetic)
};

/// Monte Carlo estimate of sgn(p) E int_0^T e^{-(1+q) delta t} H_t^{-q} dt, compared with g(x_hat).
inline GEstimate mc_verify_g(const PolicySurface& pol, const FreeBoundarySolution& sol, const SimConfig& cfg) {
    if (cfg.n_paths == 0 || cfg.n_steps == 0) throw ConfigError("n_paths and n_steps must be positive");
    const auto& dc = sol.constants();
    const auto& m = dc.params;
    const CoefficientTable tab(sol, cfg.table_nodes);
    const double dt = cfg.dt(), q = dc.q, kappa = (1 + q) * m.delta;
    const std::size_t half = cfg.n_steps / 2;

    struct PathOut {
        double integral, mid, end, tail;
    };
    std::vector<PathOut> res(cfg.n_paths);
    const std::size_t group = cfg.antithetic ? 2 : 1;
    const std::size_t ns = (cfg.n_paths + group - 1) / group;
    const double sq = std::sqrt(dt), rc = std::sqrt(1 - m.rho * m.rho);
    // Antithetic partners share one normal stream. Blocks of groups are stepped in
    // lockstep for instruction-level parallelism; a group's result does not depend
    // on its block, so the thread count cannot change the output.
    constexpr std::size_t block = 8;
    const std::size_t nblocks = (ns + block - 1) / block;
    detail::parallel_for(nblocks, cfg.threads, [&](std::size_t bi) {
        const std::size_t j0 = bi * block, nj = std::min(block, ns - j0);
        constexpr std::size_t L = 2 * block;
        double x[L], lnH[L], prev[L], acc[L], mid[L];
        std::size_t members[block];
        std::vector<detail::NormalStream> noise;
        noise.reserve(nj);
        for (std::size_t j = 0; j < nj; ++j) {
            const std::size_t k0 = (j0 + j) * group;
            members[j] = std::min(group, cfg.n_paths - k0);
            noise.emplace_back(stream_seed(cfg.seed, cfg.antithetic ? j0 + j : k0));
        }
        for (std::size_t l = 0; l < L; ++l) x[l] = pol.x_hat, lnH[l] = 0, prev[l] = 1, acc[l] = 0, mid[l] = 0;
        const double lo = tab.lo(), hi = tab.hi();
        for (std::size_t i = 1; i <= cfg.n_steps; ++i) {
            // the discounted density is advanced multiplicatively and re-anchored with exp periodically
            const bool anchor = (i & 255) == 0 || i == cfg.n_steps || i == half;
            for (std::size_t j = 0; j < nj; ++j) {
                const double z1 = noise[j](), z2 = noise[j]();
                const double b1 = sq * z1, b2 = sq * (m.rho * z1 + rc * z2);
                for (std::size_t r = 0; r < members[j]; ++r) {
                    const std::size_t l = 2 * j + r;
                    const double sg = r ? -1.0 : 1.0;
                    const double h0 = lnH[l];
                    euler_reflect(x[l], lnH[l], tab(x[l]), {sg * b1, sg * b2}, dt, lo, hi);
                    double cur;
                    if (anchor) {
                        cur = std::exp(-kappa * dt * double(i) - q * lnH[l]);
                    } else {
                        const double d = -kappa * dt - q * (lnH[l] - h0);
                        cur = prev[l] * (1 + d * (1 + d * (0.5 + d * (1.0 / 6 + d * (1.0 / 24 + d * (1.0 / 120))))));
                    }
                    acc[l] += 0.5 * (prev[l] + cur);
                    prev[l] = cur;
                    if (i == half) mid[l] = cur;
                }
            }
        }
        for (std::size_t j = 0; j < nj; ++j)
            for (std::size_t r = 0; r < members[j]; ++r) {
                const std::size_t l = 2 * j + r, k = (j0 + j) * group + r;
                res[k] = {acc[l] * dt * dc.sgn_p, mid[l], prev[l], prev[l] * std::abs(sol.g_at(x[l]))};
            }
    });

    // antithetic partners are averaged into one sample; reduction order is fixed
    auto moments = [&](auto get) {
        double s = 0, s2 = 0;
        for (std::size_t j = 0; j < ns; ++j) {
            double v = 0;
            std::size_t c = 0;
            for (std::size_t k = j * group; k < std::min(cfg.n_paths, (j + 1) * group); ++k, ++c) v += get(res[k]);
            v /= double(c);
            s += v;
            s2 += v * v;
        }
        const double mean = s / double(ns);
        const double var = ns > 1 ? (s2 - double(ns) * mean * mean) / double(ns - 1) : 0.0;
        return std::pair{mean, std::max(var, 0.0)};
    };
    GEstimate e;
    e.samples = ns;
    const auto [mean, var] = moments([](const PathOut& p) { return p.integral; });
    e.estimate = mean;
    e.stderr_ = std::sqrt(var / double(ns));
    e.target = sol.g_at(pol.x_hat);
    e.z = std::abs(e.estimate - e.target) / e.stderr_;
    e.tail = moments([](const PathOut& p) { return p.tail; }).first;
    e.var_half = moments([](const PathOut& p) { return p.mid; }).second;
    e.var_end = moments([](const PathOut& p) { return p.end; }).second;
    if (half > 0 && e.var_end > e.var_half && e.var_end > 0)
        throw NumericalError(Failure::TailTooFat, "integrand variance grows with the horizon");
    return e;
}

struct BudgetDiagnostics {
    double dt{};
    double budget_rms{}, budget_max{};
    double adm_min{};               // min liquidation value / W_0
    std::size_t sandwich_violations{};
    double w_min{};                 // min W / W_0
    std::size_t steps{}, contact_steps{};
    double interior_lnphi_rms{};    // RMS of d ln|phi1| on steps without a boundary push
    double contact_lnphi_rms{};     // RMS of d ln|phi1| on steps with a push
    double contact_mismatch_rms{};  // RMS of d ln|phi1| - dPhi/X on steps with a push
};

/// Streams paths and measures the discrete self-financing residual
/// dW/W - pi1 dS~/S~ - pi2 dS2/S2 + (c/W) dt, the share-change law and admissibility.
inline BudgetDiagnostics mc_verify_budget(const PolicySurface& pol, const FreeBoundarySolution& sol,
                                          const SimConfig& cfg) {
    if (cfg.n_paths == 0 || cfg.n_steps == 0) throw ConfigError("n_paths and n_steps must be positive");
    const auto& dc = sol.constants();
    const auto& m = dc.params;
    const CoefficientTable tab(sol, cfg.table_nodes);
    const double dt = cfg.dt(), q = dc.q;
    const double g_hat = sol.g_at(pol.x_hat), W0 = pol.xi0;

    struct Acc {
        double b2 = 0, bmax = 0, adm = INFINITY, wmin = INFINITY, i2 = 0, c2 = 0, m2 = 0;
        std::size_t sand = 0, steps = 0, contact = 0;
    };
    std::vector<Acc> acc(cfg.n_paths);
    detail::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t k) {
        detail::PathNoise noise(cfg, k, m.rho);
        Acc a;
        double x = pol.x_hat, lnH = 0, b1 = 0, b2 = 0;
        struct St {
            double W, st, s1, s2, pi1, pi2, g, lnphi1;
        };
        auto state = [&](double t) {
            const StateView v = view_at(sol, x);
            const double s1 = m.s1_0 * std::exp((m.mu1 - 0.5 * m.sigma1 * m.sigma1) * t + m.sigma1 * b1);
            const double s2 = m.s2_0 * std::exp((m.mu2 - 0.5 * m.sigma2 * m.sigma2) * t + m.sigma2 * b2);
            const double st = shadow_price(s1, v.f, m);
            const double W = W0 * std::exp(-(1 + q) * m.delta * t - (1 + q) * lnH) * v.g / g_hat;
            const double phi1 = v.pi1 * W / st;
            if (!(s1 * (1 - m.lambda_sell) <= st && st <= s1 * (1 + m.lambda_buy))) ++a.sand;
            const double phi0 = (1 - v.pi1 - v.pi2) * W, phi2 = v.pi2 * W / s2;
            const double liq = phi0 + (1 - m.lambda_sell) * s1 * std::max(phi1, 0.0)
                               - (1 + m.lambda_buy) * s1 * std::max(-phi1, 0.0) + s2 * phi2;
            a.adm = std::min(a.adm, liq / W0);
            a.wmin = std::min(a.wmin, W / W0);
            return St{W, st, s1, s2, v.pi1, v.pi2, v.g, std::log(std::abs(phi1))};
        };
        St cur = state(0);
        for (std::size_t i = 1; i <= cfg.n_steps; ++i) {
            const double x0 = x;
            const detail::Step s = noise.next();
            const auto push = euler_reflect(x, lnH, tab(x), s, dt, tab.lo(), tab.hi());
            b1 += s.dB1;
            b2 += s.dB2;
            const St nxt = state(dt * double(i));
            const double res = (nxt.W - cur.W) / cur.W - cur.pi1 * (nxt.st - cur.st) / cur.st
                               - cur.pi2 * (nxt.s2 - cur.s2) / cur.s2 + dt / std::abs(cur.g);
            a.b2 += res * res;
            a.bmax = std::max(a.bmax, std::abs(res));
            const double dl = nxt.lnphi1 - cur.lnphi1;
            const double dphi = push.first - push.second;
            if (dphi != 0) {
                ++a.contact;
                a.c2 += dl * dl;
                const double mm = dl - dphi / x;
                a.m2 += mm * mm;
            } else {
                a.i2 += dl * dl;
            }
            ++a.steps;
            (void)x0;
            cur = nxt;
        }
        acc[k] = a;
    });

    Acc t;
    for (const Acc& a : acc) {
        t.b2 += a.b2;
        t.bmax = std::max(t.bmax, a.bmax);
        t.adm = std::min(t.adm, a.adm);
        t.wmin = std::min(t.wmin, a.wmin);
        t.i2 += a.i2;
        t.c2 += a.c2;
        t.m2 += a.m2;
        t.sand += a.sand;
        t.steps += a.steps;
        t.contact += a.contact;
    }
    BudgetDiagnostics d;
    d.dt = dt;
    d.steps = t.steps;
    d.contact_steps = t.contact;
    d.budget_rms = std::sqrt(t.b2 / double(t.steps));
    d.budget_max = t.bmax;
    d.adm_min = t.adm;
    d.w_min = t.wmin;
    d.sandwich_violations = t.sand;
    const std::size_t interior = t.steps - t.contact;
    d.interior_lnphi_rms = interior ? std::sqrt(t.i2 / double(interior)) : 0.0;
    d.contact_lnphi_rms = t.contact ? std::sqrt(t.c2 / double(t.contact)) : 0.0;
    d.contact_mismatch_rms = t.contact ? std::sqrt(t.m2 / double(t.contact)) : 0.0;
    return d;
}

} // namespace illiquid
