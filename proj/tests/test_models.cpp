// Unit tests for the built-in model constructors: residual maps, analytic
// Jacobians against finite differences, steady-state identities, and
// parameter validation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <kpaths/model.hpp>
#include <kpaths/models.hpp>

#include <cmath>
#include <random>
#include <vector>

using Eigen::MatrixXd;
using Eigen::VectorXd;
using kpaths::ModelSpec;

namespace {

// Central finite differences of the residual maps in every argument; used
// to validate the hand-written Jacobians at generic points.
void check_jacobians_at(const ModelSpec& m, const VectorXd& x, const VectorXd& mu,
                        const VectorXd& y, double tol = 2e-6) {
    const double h = 1e-6;
    struct MapCase {
        std::function<VectorXd(const VectorXd&, const VectorXd&, const VectorXd&)> f;
        kpaths::MapJacobian jac;
    };
    const std::vector<MapCase> cases = {
        {m.F, m.F_jac(x, mu, y)}, {m.G, m.G_jac(x, mu, y)}, {m.H, m.H_jac(x, mu, y)}};
    for (const auto& c : cases) {
        if (c.f(x, mu, y).size() == 0) continue;
        auto fd_col = [&](int arg, int j) {
            VectorXd xp = x, xm = x, mp = mu, mm = mu, yp = y, ym = y;
            if (arg == 0) { xp(j) += h; xm(j) -= h; }
            if (arg == 1) { mp(j) += h; mm(j) -= h; }
            if (arg == 2) { yp(j) += h; ym(j) -= h; }
            return VectorXd(((c.f(xp, mp, yp) - c.f(xm, mm, ym)) / (2.0 * h)).eval());
        };
        for (int j = 0; j < x.size(); ++j)
            CHECK((c.jac.dx.col(j) - fd_col(0, j)).cwiseAbs().maxCoeff() < tol);
        for (int j = 0; j < mu.size(); ++j)
            CHECK((c.jac.dmu.col(j) - fd_col(1, j)).cwiseAbs().maxCoeff() < tol);
        for (int j = 0; j < y.size(); ++j)
            CHECK((c.jac.dy.col(j) - fd_col(2, j)).cwiseAbs().maxCoeff() < tol);
    }
}

// Convenience: residual of the stationarity system [F; r mu - mu.*G; H].
double stationary_norm(const ModelSpec& m, const VectorXd& x, const VectorXd& mu,
                       const VectorXd& y) {
    const VectorXd zero = VectorXd::Zero(m.state_dim);
    return kpaths::dae_residual(m, x, mu, y, zero, zero).cwiseAbs().maxCoeff();
}

VectorXd vec1(double a) {
    VectorXd v(1);
    v << a;
    return v;
}

}  // namespace

TEST_CASE("neoclassical growth model") {
    const ModelSpec m = kpaths::make_neoclassical_growth();

    SUBCASE("dimensions, names, and defaults") {
        CHECK(m.state_dim == 1);
        CHECK(m.jump_dim == 1);
        CHECK(m.discount_rate == 0.11);
        CHECK(m.initial_state(0) == 1.0);
        CHECK(m.variable_name(0) == "x");
        CHECK(m.variable_name(1) == "mu");
        CHECK(m.variable_name(2) == "y");
        CHECK(m.extra_penalty_vars.empty());
    }

    SUBCASE("map values at x = 2") {
        // G(2) = (1/3) 2^{-2/3} - 0.1; reference value from a 30-digit
        // evaluation of the same expression.
        CHECK(m.G(vec1(2.0), vec1(1.0), vec1(1.0))(0) ==
              doctest::Approx(0.10998684164914553).epsilon(1e-15));
        // F(x, ., y) = x^{1/3} - 0.1 x - y.
        CHECK(m.F(vec1(2.0), vec1(1.0), vec1(0.5))(0) ==
              doctest::Approx(std::cbrt(2.0) - 0.2 - 0.5).epsilon(1e-15));
        // H = mu y - 1.
        CHECK(m.H(vec1(2.0), vec1(4.0), vec1(0.25))(0) == doctest::Approx(0.0));
    }

    SUBCASE("steady state solves the stationarity system") {
        // Reference steady state from a high-precision root of
        // G(x) = r, F = 0, mu = 1/y.
        const VectorXd xs = vec1(1.9998120265038478);
        const VectorXd mus = vec1(0.94348490149284457);
        const VectorXd ys = vec1(1.0599003740470393);
        CHECK(stationary_norm(m, xs, mus, ys) < 1e-14);
    }

    SUBCASE("dae_residual is zero exactly at consistent points") {
        const VectorXd x = vec1(1.5), mu = vec1(1.2), y = vec1(1.0 / 1.2);
        const VectorXd xdot = m.F(x, mu, y);
        const VectorXd mudot =
            m.discount_rate * mu - mu.cwiseProduct(m.G(x, mu, y));
        CHECK(kpaths::dae_residual(m, x, mu, y, xdot, mudot).cwiseAbs().maxCoeff() <
              1e-16);
        CHECK_THROWS_AS(kpaths::dae_residual(m, x, mu, VectorXd::Zero(2), xdot, mudot),
                        std::invalid_argument);
    }

    SUBCASE("analytic Jacobians match finite differences") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(0.5, 3.0);
        for (int rep = 0; rep < 20; ++rep)
            check_jacobians_at(m, vec1(u(rng)), vec1(u(rng)), vec1(u(rng)));
    }

    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(kpaths::make_neoclassical_growth(-1.0), std::invalid_argument);
        CHECK_THROWS_AS(kpaths::make_neoclassical_growth(1.0, 1.5), std::invalid_argument);
        CHECK_THROWS_AS(kpaths::make_neoclassical_growth(1.0, 0.1, -0.2),
                        std::invalid_argument);
        CHECK_THROWS_AS(kpaths::make_neoclassical_growth(1.0, 0.1, 0.11, 1.4),
                        std::invalid_argument);
    }
}

TEST_CASE("concave-convex (Skiba) growth model") {
    const ModelSpec m = kpaths::make_skiba_growth();

    SUBCASE("kink location") {
        // (b2/(b1-1))^{1/a} = (2.5/2)^3 = 1.953125 exactly in binary.
        CHECK(kpaths::skiba_kink() == 1.953125);
        CHECK(kpaths::skiba_kink(0.5, 3.0, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
    }

    SUBCASE("production is continuous across the kink") {
        const double xbar = kpaths::skiba_kink();
        const double lower = 0.5 * std::cbrt(xbar);          // A x^a
        const double upper = 0.5 * (3.0 * std::cbrt(xbar) - 2.5);  // A (b1 x^a - b2)
        CHECK(lower == doctest::Approx(upper).epsilon(1e-14));
        // F uses the max of the branches, so it is continuous too.
        const double eps = 1e-9;
        const double below = m.F(vec1(xbar - eps), vec1(1.0), vec1(0.0))(0);
        const double above = m.F(vec1(xbar + eps), vec1(1.0), vec1(0.0))(0);
        CHECK(std::abs(below - above) < 1e-8);
    }

    SUBCASE("both steady states solve the stationarity system") {
        // High-precision roots of the two branches of G(x) = r with
        // mu = 1/y, F = 0; the lower root sits on the concave branch,
        // the upper on the convex one.
        CHECK(stationary_norm(m, vec1(0.70704032251964123), vec1(1.0 / 0.37473137093540985),
                              vec1(0.37473137093540985)) < 1e-13);
        CHECK(stationary_norm(m, vec1(3.6738892848117122), vec1(1.0 / 0.69716132095020744),
                              vec1(0.69716132095020744)) < 1e-13);
    }

    SUBCASE("analytic Jacobians match finite differences away from the kink") {
        std::mt19937_64 rng(19);
        std::uniform_real_distribution<double> u(0.3, 4.0);
        const double xbar = kpaths::skiba_kink();
        for (int rep = 0; rep < 20; ++rep) {
            double xv = u(rng);
            if (std::abs(xv - xbar) < 1e-2) xv += 0.05;  // FD invalid across the kink
            check_jacobians_at(m, vec1(xv), vec1(u(rng)), vec1(u(rng)));
        }
    }

    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(kpaths::make_skiba_growth(1.0, 0.1, 0.11, 1.0 / 3.0, -0.5),
                        std::invalid_argument);
        CHECK_THROWS_AS(kpaths::make_skiba_growth(1.0, 0.1, 0.11, 1.0 / 3.0, 0.5, 1.0),
                        std::invalid_argument);
    }
}

TEST_CASE("linear asset pricing model") {
    const ModelSpec m = kpaths::make_asset_pricing();

    SUBCASE("no jump block") {
        CHECK(m.state_dim == 1);
        CHECK(m.jump_dim == 0);
        CHECK(m.H(vec1(1.0), vec1(1.0), VectorXd()).size() == 0);
    }

    SUBCASE("maps are exactly the stated forms") {
        CHECK(m.F(vec1(1.0), vec1(2.0), VectorXd())(0) ==
              doctest::Approx(0.02 - 0.2).epsilon(1e-15));
        // r mu - mu G = r mu - x, independent of mu's value in the product.
        const VectorXd x = vec1(0.7), mu = vec1(3.0);
        const double costate_rhs =
            m.discount_rate * mu(0) - mu(0) * m.G(x, mu, VectorXd())(0);
        CHECK(costate_rhs == doctest::Approx(0.1 * 3.0 - 0.7).epsilon(1e-14));
    }

    SUBCASE("stationary point x* = -c/g, mu* = x*/r") {
        CHECK(stationary_norm(m, vec1(0.1), vec1(1.0), VectorXd()) < 1e-16);
    }

    SUBCASE("analytic Jacobians match finite differences") {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> u(0.2, 4.0);
        for (int rep = 0; rep < 20; ++rep)
            check_jacobians_at(m, vec1(u(rng)), vec1(u(rng)), VectorXd());
    }

    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(kpaths::make_asset_pricing(1.0, 0.02, 0.2), std::invalid_argument);
        CHECK_THROWS_AS(kpaths::make_asset_pricing(1.0, 0.02, -0.2, -0.1),
                        std::invalid_argument);
    }
}

TEST_CASE("two-sector human capital model") {
    const ModelSpec m = kpaths::make_human_capital();

    SUBCASE("dimensions and penalty wiring") {
        CHECK(m.state_dim == 2);
        CHECK(m.jump_dim == 3);
        CHECK(m.extra_penalty_vars == std::vector<int>{0, 1, 2});
        CHECK(m.extra_penalty_weight == 5e-3);
        CHECK(m.variable_name(0) == "x_k");
        CHECK(m.variable_name(3) == "mu_h");
        CHECK(m.variable_name(4) == "y_c");
    }

    SUBCASE("production value at the baseline initial stocks") {
        // f(1.5, 1.37) = 1.5^{1/3} 1.37^{1/4}; reference from a 30-digit
        // evaluation. Read off H_3 = f - y_c - y_k - y_h at y = 0.
        VectorXd x(2), mu(2), y(3);
        x << 1.5, 1.37;
        mu << 1.0, 1.0;
        y.setZero();
        CHECK(m.H(x, mu, y)(2) == doctest::Approx(1.2384464373321944).epsilon(1e-15));
    }

    SUBCASE("grad_y H is singular (the no-arbitrage row has no y terms)") {
        VectorXd x(2), mu(2), y(3);
        x << 1.5, 1.37;
        mu << 1.0, 1.0;
        y << 1.0, 0.2, 0.1;
        const MatrixXd dy = m.H_jac(x, mu, y).dy;
        CHECK(dy.row(1).cwiseAbs().maxCoeff() == 0.0);
        CHECK(dy.jacobiSvd().singularValues().minCoeff() < 1e-15);
    }

    SUBCASE("no-arbitrage helper reproduces the baseline x_h(0)") {
        // Root of a_k f/x_k - delta_k = a_h f/x_h - delta_h at x_k = 1.5,
        // solved to 30 digits with an independent root-finder.
        CHECK(kpaths::human_capital_noarb_xh(1.5) ==
              doctest::Approx(1.374515588875777).epsilon(1e-12));
        CHECK_THROWS_AS(kpaths::human_capital_noarb_xh(-1.0), std::invalid_argument);
    }

    SUBCASE("steady state solves the stationarity system") {
        VectorXd xs(2), mus(2), ys(3);
        xs << 3.0024724187979468, 2.9555587872542289;
        mus << 0.69274508177919714, 0.69274508177919714;
        ys << 1.4435324426002004, 0.30024724187979468, 0.14777793936271144;
        CHECK(stationary_norm(m, xs, mus, ys) < 1e-13);
    }

    SUBCASE("analytic Jacobians match finite differences") {
        std::mt19937_64 rng(29);
        std::uniform_real_distribution<double> u(0.5, 3.0);
        for (int rep = 0; rep < 20; ++rep) {
            VectorXd x(2), mu(2), y(3);
            x << u(rng), u(rng);
            mu << u(rng), u(rng);
            y << u(rng), u(rng), u(rng);
            check_jacobians_at(m, x, mu, y);
        }
    }

    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(kpaths::make_human_capital(1.5, 1.37, 0.1, 0.05, 0.6, 0.5),
                        std::invalid_argument);
        CHECK_THROWS_AS(kpaths::make_human_capital(-1.5), std::invalid_argument);
        CHECK_THROWS_AS(
            kpaths::make_human_capital(1.5, 1.37, 0.1, 0.05, 1.0 / 3.0, 0.25, 0.11, -1.0),
            std::invalid_argument);
    }
}

TEST_CASE("optimal advertising model") {
    const ModelSpec m = kpaths::make_optimal_advertising();

    SUBCASE("gamma constant and defaults") {
        CHECK(kpaths::advertising_gamma() == doctest::Approx(0.32).epsilon(1e-15));
        CHECK(m.initial_state(0) == 0.4);
        CHECK(m.state_dim == 1);
        CHECK(m.jump_dim == 1);
    }

    SUBCASE("co-state lower bound keeps mu away from the G singularity") {
        CHECK(m.mu0_lower(0) > 0.0);
    }

    SUBCASE("steady state solves the stationarity system") {
        // High-precision root of the stationarity system; with kappa = 1/2
        // the control satisfies y = (kappa mu (1-x))^{kappa/(1-kappa)}.
        CHECK(stationary_norm(m, vec1(0.73706229297431538), vec1(1.0661012468789296),
                              vec1(0.14015910865578453)) < 1e-13);
    }

    SUBCASE("analytic Jacobians match finite differences") {
        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> ux(0.1, 0.9);
        std::uniform_real_distribution<double> up(0.3, 2.0);
        for (int rep = 0; rep < 20; ++rep)
            check_jacobians_at(m, vec1(ux(rng)), vec1(up(rng)), vec1(up(rng)));
    }

    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(kpaths::make_optimal_advertising(0.4, 0.11, 0.5, 0.05, 1.5),
                        std::invalid_argument);
        CHECK_THROWS_AS(kpaths::make_optimal_advertising(0.4, 0.11, -0.5),
                        std::invalid_argument);
    }
}

TEST_CASE("ModelSpec validation rejects inconsistent instances") {
    ModelSpec m = kpaths::make_neoclassical_growth();
    m.discount_rate = 0.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);

    ModelSpec m2 = kpaths::make_neoclassical_growth();
    m2.initial_state = VectorXd::Zero(2);
    CHECK_THROWS_AS(m2.validate(), std::invalid_argument);

    ModelSpec m3 = kpaths::make_neoclassical_growth();
    m3.mu0_lower = kpaths::detail::constant_vector(1, 2.0);
    m3.mu0_upper = kpaths::detail::constant_vector(1, 1.0);
    CHECK_THROWS_AS(m3.validate(), std::invalid_argument);
}
