#include <gtest/gtest.h>

#include "illiquid/sim.hpp"
#include "oracles.hpp"

using namespace illiquid;

namespace {

struct Solved {
    FreeBoundarySolution sol;
    PolicySurface pol;
};

Solved solved(double p = 0.5, double lambda = 0.01) {
    Solved s{shoot(validate(oracle::reference(p, lambda))), {}};
    s.pol = build_policy(s.sol);
    return s;
}

SimConfig cfg(std::size_t paths, std::size_t steps, double T, unsigned threads = 1) {
    SimConfig c;
    c.n_paths = paths;
    c.n_steps = steps;
    c.horizon = T;
    c.threads = threads;
    return c;
}

} // namespace

TEST(Simulate, PathInvariants) {
    const auto s = solved();
    const auto& m = s.sol.constants().params;
    const auto paths = simulate(s.pol, s.sol, cfg(20, 2000, 2.0));
    ASSERT_EQ(paths.size(), 20u);
    for (const auto& P : paths) {
        ASSERT_EQ(P.t.size(), 2001u);
        for (std::size_t i = 0; i < P.t.size(); ++i) {
            ASSERT_GE(P.X[i], s.sol.x_lo());
            ASSERT_LE(P.X[i], s.sol.x_hi());
            ASSERT_LE((1 - m.lambda_sell) * P.S1[i], P.S_tilde[i]);
            ASSERT_LE(P.S_tilde[i], (1 + m.lambda_buy) * P.S1[i]);
            ASSERT_GT(P.W[i], 0);
            if (i > 0) {
                // pushes only at the matching endpoint
                if (P.phi_up[i] > P.phi_up[i - 1]) ASSERT_EQ(P.X[i], s.sol.x_lo());
                if (P.phi_down[i] > P.phi_down[i - 1]) ASSERT_EQ(P.X[i], s.sol.x_hi());
            }
        }
    }
}

TEST(Simulate, CorrelationOfDrivers) {
    const auto s = solved();
    const double rho = s.sol.constants().params.rho;
    auto c = cfg(40, 5000, 5.0);
    c.antithetic = false;
    const auto paths = simulate(s.pol, s.sol, c);
    double s11 = 0, s22 = 0, s12 = 0;
    std::size_t n = 0;
    for (const auto& P : paths)
        for (std::size_t i = 1; i < P.t.size(); ++i) {
            const double a = P.B1[i] - P.B1[i - 1], b = P.B2[i] - P.B2[i - 1];
            s11 += a * a, s22 += b * b, s12 += a * b, ++n;
        }
    const double r = s12 / std::sqrt(s11 * s22);
    const double se = (1 - rho * rho) / std::sqrt(double(n));
    EXPECT_NEAR(r, rho, 3 * se);
}

TEST(Simulate, SmallCostsGiveMertonConsumption) {
    const auto s = solved(0.5, 1e-5);
    const auto& dc = s.sol.constants();
    const auto paths = simulate(s.pol, s.sol, cfg(4, 500, 1.0));
    for (const auto& P : paths)
        for (std::size_t i = 0; i < P.t.size(); ++i) {
            ASSERT_NEAR(P.X[i], dc.x_M, 0.05 * dc.x_M); // band width ~ lambda^(1/3)
            ASSERT_NEAR(P.S_tilde[i] / P.S1[i], 1, 2e-5);
            ASSERT_NEAR(P.c[i] / P.W[i], 1 / std::abs(dc.y_M), 5e-3 / std::abs(dc.y_M));
        }
}

TEST(Simulate, StrongOrderProbe) {
    // coarse paths use sums of the fine increments, so both see the same Brownian path
    const auto s = solved();
    const auto& m = s.sol.constants().params;
    const CoefficientTable tab(s.sol, 16385);
    const double T = 1.0;
    const std::size_t fine = 4096;
    auto run = [&](const std::vector<detail::Step>& dB, std::size_t stride) {
        double x = s.pol.x_hat, lnH = 0;
        const double dt = T / double(fine) * double(stride);
        for (std::size_t i = 0; i < dB.size(); i += stride) {
            detail::Step acc{0, 0};
            for (std::size_t j = i; j < i + stride; ++j) acc.dB1 += dB[j].dB1, acc.dB2 += dB[j].dB2;
            euler_reflect(x, lnH, tab(x), acc, dt, tab.lo(), tab.hi());
        }
        return std::exp(-(1 + s.sol.constants().q) * lnH) * s.sol.g_at(x);
    };
    std::vector<double> err(3, 0.0);
    const int npaths = 200;
    for (int k = 0; k < npaths; ++k) {
        SimConfig c = cfg(1, fine, T);
        c.antithetic = false;
        c.seed = 1000 + k;
        detail::PathNoise noise(c, 0, m.rho);
        std::vector<detail::Step> dB(fine);
        for (auto& d : dB) d = noise.next();
        const double ref = run(dB, 1);
        for (int l = 0; l < 3; ++l) {
            const double e = run(dB, std::size_t(16) << l) - ref;
            err[l] += e * e;
        }
    }
    std::vector<double> lx, ly;
    for (int l = 0; l < 3; ++l) {
        lx.push_back(std::log(double(16 << l)));
        ly.push_back(0.5 * std::log(err[l] / npaths));
    }
    const double slope = oracle::slope(lx, ly);
    EXPECT_GT(slope, 0.3);
    EXPECT_LT(slope, 1.1);
}

TEST(McG, ReferenceShortHorizonOk) {
    const auto s = solved();
    auto c = cfg(400, 20000, 100.0);
    const auto e = mc_verify_g(s.pol, s.sol, c);
    EXPECT_GT(e.estimate, 0);
    EXPECT_LT(e.tail, 0.05 * e.target);
    // truncated at T, so the estimate can only fall short by the tail
    EXPECT_LE(std::abs(e.estimate + e.tail - e.target), 4 * e.stderr_ + 0.01 * e.target);
}

TEST(McG, NegativeForNegativeP) {
    const auto s = solved(-1.0);
    const auto e = mc_verify_g(s.pol, s.sol, cfg(200, 4000, 40.0));
    EXPECT_LT(e.estimate, 0);
    EXPECT_LT(e.target, 0);
}

TEST(McG, SmallCostsHitFrictionlessIntegral) {
    // frictionless: H^{-q} e^{-(1+q) delta t} has mean exp(-t/|y_M|), integral |y_M|
    const auto s = solved(0.5, 1e-5);
    const auto& dc = s.sol.constants();
    const auto e = mc_verify_g(s.pol, s.sol, cfg(200, 20000, 200.0));
    const double truncated = dc.y_M * (1 - std::exp(-200.0 / dc.y_M));
    EXPECT_NEAR(e.estimate, truncated, 4 * e.stderr_ + 1e-3 * dc.y_M);
}

TEST(McG, ThreadCountDoesNotChangeResult) {
    const auto s = solved();
    // long enough that the integrand variance has peaked (short horizons trip TailTooFat)
    const auto a = mc_verify_g(s.pol, s.sol, cfg(64, 100000, 100.0, 1));
    const auto b = mc_verify_g(s.pol, s.sol, cfg(64, 100000, 100.0, 4));
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.stderr_, b.stderr_);
    EXPECT_EQ(a.tail, b.tail);
}

TEST(Budget, ResidualShrinksWithStep) {
    const auto s = solved();
    const auto a = mc_verify_budget(s.pol, s.sol, cfg(50, 500, 1.0));
    const auto b = mc_verify_budget(s.pol, s.sol, cfg(50, 2000, 1.0));
    EXPECT_LT(b.budget_rms, 0.4 * a.budget_rms);
    EXPECT_EQ(a.sandwich_violations, 0u);
    EXPECT_GE(a.adm_min, -1e-6);
    EXPECT_GT(a.w_min, 0);
    EXPECT_GT(a.contact_steps, 0u);
    // interior share changes are of the size of the discretization error, contact ones are not
    EXPECT_LT(b.interior_lnphi_rms, 0.1 * b.contact_lnphi_rms);
}

TEST(Budget, WiderBandFewerPushes) {
    auto pushes = [](double lambda) {
        const auto s = solved(0.5, lambda);
        const auto paths = simulate(s.pol, s.sol, cfg(20, 2000, 2.0));
        double tot = 0;
        for (const auto& P : paths) tot += P.phi_up.back() + P.phi_down.back();
        return tot;
    };
    EXPECT_GT(pushes(0.005), pushes(0.05));
}

TEST(McG, ShortHorizonFlagsGrowingVariance) {
    const auto s = solved();
    try {
        mc_verify_g(s.pol, s.sol, cfg(64, 2000, 10.0));
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.kind(), Failure::TailTooFat);
    }
}

TEST(Config, ZeroPathsRejected) {
    const auto s = solved();
    EXPECT_THROW(mc_verify_g(s.pol, s.sol, cfg(0, 100, 1.0)), ConfigError);
}
