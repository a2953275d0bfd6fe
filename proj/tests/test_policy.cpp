#include <gtest/gtest.h>

#include "illiquid/policy.hpp"
#include "oracles.hpp"

using namespace illiquid;

namespace {

FreeBoundarySolution solve(const MarketParams& m) { return shoot(validate(m)); }

} // namespace

TEST(Policy, NoInitialSharesBuysToLowerEnd) {
    for (double p : {0.5, -1.0}) {
        const auto sol = solve(oracle::reference(p));
        const auto P = build_policy(sol);
        EXPECT_EQ(P.x_hat, sol.x_lo());
        EXPECT_EQ(P.initial_trade.kind, TradeKind::BuyToLower);
        EXPECT_GT(P.initial_trade.shares, 0);
        EXPECT_TRUE(P.r_roots.empty());
    }
}

TEST(Policy, ConstructedInteriorRoot) {
    const auto base = oracle::reference();
    const auto sol = solve(base);
    const double xs = sol.x_lo() + 0.4 * (sol.x_hi() - sol.x_lo());
    const double f = sol.f_at(xs), pi1 = xs / (sol.constants().q * sol.g_at(xs));
    // eta1 S e^f = (eta0 + eta1 S e^f) pi1  =>  eta1 = eta0 pi1 / ((1 - pi1) S e^f)
    auto m = base;
    m.eta1 = m.eta0 * pi1 / ((1 - pi1) * m.s1_0 * std::exp(f));
    const auto sol2 = solve(m);
    const auto P = build_policy(sol2);
    ASSERT_EQ(P.r_roots.size(), 1u);
    EXPECT_NEAR(P.x_hat, xs, 1e-9 * xs);
    EXPECT_EQ(P.initial_trade.kind, TradeKind::None);
    EXPECT_EQ(P.initial_trade.shares, 0);
}

TEST(Policy, EndpointsOfF) {
    const auto sol = solve(oracle::reference());
    const auto P = build_policy(sol);
    EXPECT_NEAR(P.f.front(), std::log(1.01), 1e-16);
    EXPECT_NEAR(P.f.back(), std::log(0.99), 1e-16);
    // f decreasing: f' = -g'/x < 0 inside
    for (std::size_t i = 1; i < P.f.size(); ++i) ASSERT_LE(P.f[i], P.f[i - 1] + 1e-10); // pinned ends vs shooting tolerance
    EXPECT_NEAR(P.f.front() - P.f.back(), std::log(1.01 / 0.99), 1e-10);
}

TEST(Policy, BandOrderedAndContainsMappedFraction) {
    for (double p : {0.5, -1.0}) {
        const auto sol = solve(oracle::reference(p));
        const auto P = build_policy(sol);
        EXPECT_LT(P.pi_lo, P.pi_hi);
        const double m0 = mapped_fraction(P.x_hat / (sol.constants().q * sol.g_at(P.x_hat)), sol.f_at(P.x_hat));
        EXPECT_GE(m0, P.pi_lo - 1e-9);
        EXPECT_LE(m0, P.pi_hi + 1e-9);
        for (std::size_t i = 1; i < P.mapped.size(); ++i) ASSERT_GT(P.mapped[i], P.mapped[i - 1]);
        // Merton weight lies inside the band
        const double pm = oracle::merton_weights(oracle::reference(p)).first;
        EXPECT_TRUE(P.pi_lo < pm && pm < P.pi_hi) << p;
    }
}

TEST(Policy, FractionFormsAgree) {
    const auto sol = solve(oracle::reference());
    const auto& dc = sol.constants();
    for (std::size_t i = 50; i + 50 < sol.size(); i += 200) {
        const auto fr = fractions(sol.x()[i], sol.g()[i], sol.g_prime()[i], dc);
        EXPECT_NEAR(fr.pi1, fr.pi1_theta, 1e-10 * std::abs(fr.pi1));
    }
}

TEST(Policy, FractionsAtVertexAreMerton) {
    const auto m = oracle::reference();
    const auto dc = validate(m);
    const auto fr = fractions(dc.x_M, dc.y_M, 0.0, dc);
    const auto [w1, w2] = oracle::merton_weights(m);
    EXPECT_NEAR(fr.pi1, w1, 1e-12);
    EXPECT_NEAR(fr.pi2, w2, 1e-12);
}

TEST(Value, SignAndFrictionlessBound) {
    for (double p : {0.5, -1.0}) {
        const auto m = oracle::reference(p);
        const auto sol = solve(m);
        const auto P = build_policy(sol);
        EXPECT_EQ(P.value < 0, p < 0);
        const double merton = oracle::merton_value(m.eta0, m);
        EXPECT_NEAR(frictionless_value(m.eta0, sol.constants()), merton, 1e-12 * std::abs(merton));
        EXPECT_LT(P.value, merton);
    }
}

TEST(Value, DecreasingInSellCost) {
    double prev = INFINITY;
    for (double l : {0.005, 0.01, 0.02}) {
        auto m = oracle::reference();
        m.lambda_buy = 0;
        m.lambda_sell = l;
        const auto P = build_policy(solve(m));
        EXPECT_LT(P.value, prev) << l;
        prev = P.value;
    }
}

TEST(Asymptotics, RhoZeroForms) {
    auto m = oracle::reference();
    m.rho = 0;
    const auto a = asymptotic_coeffs(m);
    EXPECT_NEAR(a.zeta1, oracle::zeta1_rho0(m), 1e-12 * a.zeta1);
    EXPECT_NEAR(a.zeta1_rho0, oracle::zeta1_rho0(m), 1e-12 * a.zeta1);
    EXPECT_GT(a.zeta1, a.zeta1_single);
    EXPECT_NEAR(a.zeta0, 2 * m.mu1 / (m.sigma1 * m.sigma1), 1e-14);
}
