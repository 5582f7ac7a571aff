// Unit tests for the diagnostics layer: transversality residuals, co-state
// divergence rates, random training grids, and the two sweep drivers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <kpaths/diagnostics.hpp>
#include <kpaths/models.hpp>
#include <kpaths/reference.hpp>
#include <kpaths/solver.hpp>

#include <cmath>
#include <vector>

using Eigen::MatrixXd;
using Eigen::VectorXd;
using kpaths::KernelSolution;
using kpaths::KernelSpec;
using kpaths::TrainingGrid;
using kpaths::Trajectory;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a + (b - a) * i / (n - 1);
    return out;
}

VectorXd vec1(double a) {
    VectorXd v(1);
    v << a;
    return v;
}

// A hand-built solution with zero coefficients: x(t) = x0 and mu(t) = mu0
// for all t, which makes the transversality residual e^{-rt} x0 mu0 exactly.
KernelSolution constant_solution(double mu0) {
    KernelSolution sol;
    sol.model = kpaths::make_neoclassical_growth();
    sol.kernel = KernelSpec(0.5, 10.0, 1.0);
    sol.grid = TrainingGrid::equispaced(40.0, 41);
    sol.alpha_x = MatrixXd::Zero(41, 1);
    sol.alpha_mu = MatrixXd::Zero(41, 1);
    sol.alpha_y = MatrixXd::Zero(41, 1);
    sol.mu0 = vec1(mu0);
    sol.y0 = vec1(1.0);
    return sol;
}

}  // namespace

TEST_CASE("transversality residual") {
    SUBCASE("constant paths give the exact discounted product") {
        const auto rep = kpaths::transversality_residual(constant_solution(1.0), 200.0);
        REQUIRE(rep.times.size() == 50);
        CHECK(rep.times.front() == 0.0);
        CHECK(rep.times.back() == doctest::Approx(200.0).epsilon(1e-12));
        // Three log decades: the first positive time is horizon/1000.
        CHECK(rep.times[1] == doctest::Approx(0.2).epsilon(1e-12));
        for (size_t i = 0; i < rep.times.size(); ++i) {
            const double expected = std::exp(-0.11 * rep.times[i]);  // x0 = mu0 = 1
            CHECK(rep.values[i](0) == doctest::Approx(expected).epsilon(1e-12));
        }
        CHECK(rep.terminal_max_abs ==
              doctest::Approx(std::exp(-0.11 * 200.0)).epsilon(1e-12));
    }

    SUBCASE("residual ratio over a 10-unit gap is e^{-10 r} for bounded paths") {
        const auto sol = constant_solution(0.7);
        const auto a = sol.evaluate(5.0), b = sol.evaluate(15.0);
        const double ra = std::exp(-0.11 * 5.0) * a.x(0) * a.mu(0);
        const double rb = std::exp(-0.11 * 15.0) * b.x(0) * b.mu(0);
        CHECK(rb / ra == doctest::Approx(std::exp(-1.1)).epsilon(1e-12));
    }

    SUBCASE("fitted baseline decays far below the training horizon value") {
        const auto sol = kpaths::solve_model(kpaths::make_neoclassical_growth(),
                                             KernelSpec(0.5, 10.0, 1.0),
                                             TrainingGrid::equispaced(40.0, 41));
        REQUIRE(sol.converged);
        const auto rep = kpaths::transversality_residual(sol, 200.0);
        CHECK(rep.terminal_max_abs < 1e-6);
        CHECK(rep.terminal_max_abs > 0.0);
        // The t = 0 entry is x0 * mu0_hat, order one.
        CHECK(rep.values.front()(0) > 0.5);
    }

    SUBCASE("horizon must cover the training grid") {
        CHECK_THROWS_AS(kpaths::transversality_residual(constant_solution(1.0), 20.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(kpaths::transversality_residual(constant_solution(1.0), 200.0, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("divergence rate") {
    const auto model = kpaths::make_neoclassical_growth();

    SUBCASE("solution trajectories settle to a zero rate") {
        const Trajectory tr = kpaths::integrate_dae(model, vec1(1.0),
                                                    vec1(1.4422045291425865),
                                                    linspace(0.0, 40.0, 201));
        const auto rep = kpaths::divergence_rate(model, tr);
        REQUIRE(rep.tail_rate.size() == 1);
        CHECK(std::abs(rep.tail_rate(0)) < 0.01);
        CHECK_FALSE(rep.tail_exceeds_discount);
    }

    SUBCASE("co-states above the saddle path grow faster than the discount rate") {
        const Trajectory tr = kpaths::integrate_dae(model, vec1(1.0),
                                                    vec1(1.1 * 1.4422045291425865),
                                                    linspace(0.0, 100.0, 401));
        REQUIRE_FALSE(tr.truncated);
        const auto rep = kpaths::divergence_rate(model, tr);
        CHECK(rep.tail_rate(0) > model.discount_rate);
        CHECK(rep.tail_exceeds_discount);
    }

    SUBCASE("asset-pricing bubbles grow at exactly the discount rate") {
        // mu(t) = mu_f(t) + zeta e^{rt} solves the same co-state equation;
        // its tail log-derivative converges to r = 0.1.
        const auto asset = kpaths::make_asset_pricing();
        Trajectory tr;
        tr.times = linspace(80.0, 100.0, 201);
        for (double t : tr.times) {
            const double xt = 0.9 * std::exp(-0.2 * t) + 0.1;
            const double mf = kpaths::asset_fundamental_price(1.0, 0.02, -0.2, 0.1, t);
            tr.x_path.push_back(vec1(xt));
            tr.mu_path.push_back(vec1(mf + 1.0 * std::exp(0.1 * t)));
            tr.y_path.push_back(VectorXd());
        }
        const auto rep = kpaths::divergence_rate(asset, tr);
        CHECK(rep.tail_rate(0) == doctest::Approx(0.1).epsilon(1e-2));
        CHECK(std::abs(rep.tail_rate(0) - 0.1) < 1e-3);
    }

    SUBCASE("rates are undefined past a zero crossing of the co-state") {
        Trajectory tr;
        tr.times = linspace(0.0, 10.0, 11);
        for (double t : tr.times) {
            tr.x_path.push_back(vec1(1.0));
            tr.mu_path.push_back(vec1(5.0 - t));  // crosses zero at t = 5
            tr.y_path.push_back(vec1(1.0));
            tr.xdot_path.push_back(vec1(0.0));
            tr.mudot_path.push_back(vec1(-1.0));
        }
        const auto rep = kpaths::divergence_rate(model, tr);
        // Defined strictly before the crossing, NaN from it onward.
        CHECK_FALSE(std::isnan(rep.rates[2](0)));
        for (size_t i = 5; i < rep.times.size(); ++i)
            CHECK(std::isnan(rep.rates[i](0)));
    }
}

TEST_CASE("uniform iid training grids") {
    SUBCASE("deterministic for a fixed seed, fresh for a new one") {
        const TrainingGrid a = kpaths::uniform_iid_grid(40.0, 21, 7u);
        const TrainingGrid b = kpaths::uniform_iid_grid(40.0, 21, 7u);
        const TrainingGrid c = kpaths::uniform_iid_grid(40.0, 21, 8u);
        CHECK(a.points == b.points);
        CHECK(a.points != c.points);
    }

    SUBCASE("points are sorted and inside [0, T]") {
        const TrainingGrid g = kpaths::uniform_iid_grid(40.0, 50, 12345u);
        CHECK(g.size() == 50);
        CHECK(g.points.front() >= 0.0);
        CHECK(g.points.back() <= 40.0);
        for (size_t i = 1; i < g.points.size(); ++i)
            CHECK(g.points[i] > g.points[i - 1]);
    }

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(kpaths::uniform_iid_grid(-1.0, 10, 1u), std::invalid_argument);
        CHECK_THROWS_AS(kpaths::uniform_iid_grid(40.0, 1, 1u), std::invalid_argument);
    }
}

TEST_CASE("consistency sweep") {
    const auto model = kpaths::make_neoclassical_growth();
    const KernelSpec kernel(0.5, 10.0, 1.0);
    const kpaths::SolverConfig config;

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(kpaths::consistency_sweep(model, kernel, config, {},
                                                  "equispaced", 0u, 40.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(kpaths::consistency_sweep(model, kernel, config, {12, 8},
                                                  "equispaced", 0u, 40.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(kpaths::consistency_sweep(model, kernel, config, {8, 12},
                                                  "sobol", 0u, 40.0),
                        std::invalid_argument);
    }

    SUBCASE("duplicate N values give bitwise-identical cells") {
        const auto rep = kpaths::consistency_sweep(model, kernel, config, {12, 12},
                                                   "equispaced", 0u, 40.0);
        REQUIRE(rep.cells.size() == 2);
        CHECK(rep.cells[0].converged);
        CHECK(rep.cells[0].norm_sq == rep.cells[1].norm_sq);
        CHECK(rep.cells[0].mean_sq_residual == rep.cells[1].mean_sq_residual);
        CHECK(rep.cells[0].status == rep.cells[1].status);
    }

    SUBCASE("errors are recorded when a reference is supplied") {
        const auto ss = kpaths::find_steady_states(model);
        const auto times = linspace(0.0, 40.0, 101);
        const auto shoot =
            kpaths::shooting_solve(model, 40.0, ss[0].x, vec1(0.5), vec1(3.0), times);
        REQUIRE(shoot.converged);
        const auto rep = kpaths::consistency_sweep(model, kernel, config, {12, 20},
                                                   "equispaced", 0u, 40.0, &shoot.path);
        REQUIRE(rep.cells.size() == 2);
        for (const auto& cell : rep.cells) {
            CHECK(cell.converged);
            CHECK(std::isfinite(cell.eps_x));
            CHECK(std::isfinite(cell.eps_y));
            CHECK(cell.norm_sq > 0.0);
        }
        // Refining the grid does not hurt the fit.
        CHECK(rep.cells[1].eps_x <= 1.5 * rep.cells[0].eps_x);
    }

    SUBCASE("random grids record their seed") {
        const auto rep = kpaths::consistency_sweep(model, kernel, config, {15},
                                                   "uniform-iid", 99u, 40.0);
        REQUIRE(rep.cells.size() == 1);
        REQUIRE(rep.cells[0].seed.has_value());
        CHECK(*rep.cells[0].seed == 99u);
        CHECK(rep.cells[0].grid_kind == "uniform-iid");
        CHECK(rep.cells[0].converged);
    }

    SUBCASE("per-cell failures are recorded, not thrown") {
        kpaths::SolverConfig bad;
        bad.ridge_lambda = 0.0;  // refused by the solver as ill-posed
        const auto rep = kpaths::consistency_sweep(model, kernel, bad, {8, 12},
                                                   "equispaced", 0u, 40.0);
        REQUIRE(rep.cells.size() == 2);
        for (const auto& cell : rep.cells) {
            CHECK_FALSE(cell.converged);
            CHECK(cell.status.rfind("failed:", 0) == 0);
        }
    }
}

TEST_CASE("robustness sweep") {
    const auto model = kpaths::make_neoclassical_growth();
    const TrainingGrid grid = TrainingGrid::equispaced(40.0, 21);
    const std::vector<KernelSpec> kernels = {KernelSpec(0.5, 10.0, 1.0),
                                             KernelSpec(1.5, 10.0, 1.0)};

    CHECK_THROWS_AS(kpaths::robustness_sweep(model, {}, kpaths::SolverConfig{}, grid),
                    std::invalid_argument);

    const auto rep = kpaths::robustness_sweep(model, kernels, kpaths::SolverConfig{}, grid);
    REQUIRE(rep.cells.size() == 2);
    CHECK(rep.cells[0].nu == 0.5);
    CHECK(rep.cells[1].nu == 1.5);
    for (const auto& cell : rep.cells) {
        CHECK(cell.ell == 10.0);
        CHECK(cell.N == 21);
        CHECK(cell.converged);
        CHECK(cell.grid_kind == "explicit");
        CHECK(cell.runtime_seconds >= 0.0);
    }
}
