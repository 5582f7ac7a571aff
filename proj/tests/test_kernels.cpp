// Unit tests for the Matern kernel layer: pointwise evaluation, running
// integrals (closed form and quadrature), Gram matrices, and RKHS norms.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <kpaths/kernels.hpp>

#include <cmath>
#include <random>
#include <vector>

using kpaths::KernelSpec;
using kpaths::TrainingGrid;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Composite Simpson on [a,b]; independent of the adaptive Gauss-Legendre
// scheme used inside the library, so the two can cross-check each other.
template <typename F>
double simpson(const F& f, double a, double b, int n_intervals) {
    const double h = (b - a) / n_intervals;
    double acc = f(a) + f(b);
    for (int i = 1; i < n_intervals; ++i)
        acc += f(a + i * h) * (i % 2 == 0 ? 2.0 : 4.0);
    return acc * h / 3.0;
}

}  // namespace

TEST_CASE("Matern pointwise evaluation") {
    SUBCASE("k(t,t) = sigma^2 for every nu") {
        for (double nu : {0.5, 1.5, 2.5}) {
            CHECK(kpaths::kernel_eval(KernelSpec(nu, 10.0, 1.0), 3.0, 3.0) ==
                  doctest::Approx(1.0).epsilon(1e-15));
            CHECK(kpaths::kernel_eval(KernelSpec(nu, 2.0, 3.0), 7.0, 7.0) ==
                  doctest::Approx(9.0).epsilon(1e-15));
        }
    }

    SUBCASE("values at unit scaled distance d = |t - t'|/ell = 1") {
        // nu = 1/2: e^{-1} exactly.
        CHECK(kpaths::kernel_eval(KernelSpec(0.5, 10.0, 1.0), 0.0, 10.0) ==
              doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
        // nu = 3/2: (1 + sqrt(3)) e^{-sqrt(3)};  nu = 5/2:
        // (1 + sqrt(5) + 5/3) e^{-sqrt(5)}.  Reference values computed with
        // a 30-digit arbitrary-precision evaluation of the same formulas.
        CHECK(kpaths::kernel_eval(KernelSpec(1.5, 10.0, 1.0), 0.0, 10.0) ==
              doctest::Approx(0.48335772459650765).epsilon(1e-15));
        CHECK(kpaths::kernel_eval(KernelSpec(2.5, 10.0, 1.0), 0.0, 10.0) ==
              doctest::Approx(0.52399410883182031).epsilon(1e-15));
    }

    SUBCASE("output scale multiplies the whole kernel") {
        const KernelSpec unit(1.5, 4.0, 1.0), scaled(1.5, 4.0, 2.0);
        for (double t : {0.0, 1.3, 6.0})
            CHECK(kpaths::kernel_eval(scaled, t, 2.0) ==
                  doctest::Approx(4.0 * kpaths::kernel_eval(unit, t, 2.0)).epsilon(1e-15));
    }

    SUBCASE("symmetry, boundedness, and stationarity") {
        std::mt19937_64 rng(42);
        std::uniform_real_distribution<double> u(0.0, 80.0);
        for (double nu : {0.5, 1.5, 2.5}) {
            const KernelSpec s(nu, 7.0, 1.3);
            for (int i = 0; i < 50; ++i) {
                const double a = u(rng), b = u(rng);
                const double kab = kpaths::kernel_eval(s, a, b);
                CHECK(kab == kpaths::kernel_eval(s, b, a));
                CHECK(kab > 0.0);
                CHECK(kab <= s.sigma * s.sigma);
                // Stationary: only |a - b| matters.
                CHECK(kpaths::kernel_eval(s, a + 5.0, b + 5.0) ==
                      doctest::Approx(kab).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("KernelSpec and TrainingGrid validation") {
    CHECK_THROWS_AS(KernelSpec(1.0, 10.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec(0.5, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec(0.5, -2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec(0.5, 10.0, 0.0), std::invalid_argument);

    CHECK_THROWS_AS(TrainingGrid({1.0}), std::invalid_argument);
    CHECK_THROWS_AS(TrainingGrid({-1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(TrainingGrid({0.0, 2.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(TrainingGrid({0.0, 3.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(TrainingGrid::equispaced(40.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(TrainingGrid::equispaced(0.0, 5), std::invalid_argument);

    const TrainingGrid g = TrainingGrid::equispaced(40.0, 41);
    CHECK(g.size() == 41);
    CHECK(g.horizon() == 40.0);
    for (int i = 0; i < 41; ++i)
        CHECK(g.points[static_cast<size_t>(i)] == doctest::Approx(double(i)).epsilon(1e-15));
}

TEST_CASE("running integral: closed form for nu = 1/2") {
    const KernelSpec s(0.5, 10.0, 1.0);

    SUBCASE("empty interval and domain errors") {
        CHECK(kpaths::kernel_integral(s, 0.0, 5.0) == 0.0);
        CHECK_THROWS_AS(kpaths::kernel_integral(s, -1.0, 5.0), std::domain_error);
        CHECK_THROWS_AS(kpaths::kernel_integral(s, 1.0, -5.0), std::domain_error);
    }

    SUBCASE("hand-checked values") {
        // int_0^10 e^{-tau/10} dtau = 10 (1 - e^{-1}); the center sits at the
        // left endpoint so only the decaying branch contributes.
        CHECK(kpaths::kernel_integral(s, 10.0, 0.0) ==
              doctest::Approx(10.0 * (1.0 - std::exp(-1.0))).epsilon(1e-15));
        // Center in the middle: two symmetric halves, twice the value above.
        CHECK(kpaths::kernel_integral(s, 20.0, 10.0) ==
              doctest::Approx(12.642411176571154).epsilon(1e-15));
        // Output scale enters quadratically.
        const KernelSpec s3(0.5, 10.0, 3.0);
        CHECK(kpaths::kernel_integral(s3, 10.0, 0.0) ==
              doctest::Approx(9.0 * 10.0 * (1.0 - std::exp(-1.0))).epsilon(1e-14));
    }

    SUBCASE("closed form agrees with quadrature on random (upper, center) pairs") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(0.0, 80.0);
        for (int i = 0; i < 100; ++i) {
            const double upper = u(rng), center = u(rng);
            auto f = [&](double tau) { return kpaths::kernel_eval(s, tau, center); };
            double quad;
            if (center > 0.0 && center < upper)
                quad = kpaths::detail::adaptive_gl15(f, 0.0, center, 5e-14) +
                       kpaths::detail::adaptive_gl15(f, center, upper, 5e-14);
            else
                quad = kpaths::detail::adaptive_gl15(f, 0.0, upper, 1e-13);
            CHECK(std::abs(kpaths::kernel_integral(s, upper, center) - quad) < 1e-10);
        }
    }

    SUBCASE("additivity over subintervals") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(0.0, 60.0);
        for (int i = 0; i < 30; ++i) {
            double a = u(rng), b = u(rng), c = u(rng);
            if (a > b) std::swap(a, b);
            auto f = [&](double tau) { return kpaths::kernel_eval(s, tau, c); };
            const double middle = kpaths::detail::adaptive_gl15(f, a, b, 1e-13);
            CHECK(kpaths::kernel_integral(s, a, c) + middle ==
                  doctest::Approx(kpaths::kernel_integral(s, b, c)).epsilon(1e-11));
        }
    }
}

TEST_CASE("running integral: quadrature path for nu = 3/2 and 5/2") {
    // The library integrates these kernels with adaptive Gauss-Legendre; an
    // independent composite-Simpson pass (split at the kink) must agree.
    for (double nu : {1.5, 2.5}) {
        const KernelSpec s(nu, 10.0, 1.0);
        for (auto [upper, center] : std::vector<std::pair<double, double>>{
                 {10.0, 0.0}, {20.0, 10.0}, {7.5, 30.0}, {40.0, 12.3}}) {
            auto f = [&](double tau) { return kpaths::kernel_eval(s, tau, center); };
            double ref = 0.0;
            if (center > 0.0 && center < upper)
                ref = simpson(f, 0.0, center, 4000) + simpson(f, center, upper, 4000);
            else
                ref = simpson(f, 0.0, upper, 8000);
            CHECK(std::abs(kpaths::kernel_integral(s, upper, center) - ref) < 1e-10);
        }
    }
}

TEST_CASE("Gram matrices") {
    SUBCASE("small cases by hand") {
        const KernelSpec s(0.5, 10.0, 1.0);
        // A 1-point grid is rejected by TrainingGrid (N >= 2), so the
        // smallest Gram is 2x2: [[sigma^2, e^{-1}], [e^{-1}, sigma^2]].
        const MatrixXd K = kpaths::gram_matrix(s, TrainingGrid({0.0, 10.0}));
        CHECK(K.rows() == 2);
        CHECK(K(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(K(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(K(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
        CHECK(K(0, 1) == K(1, 0));
    }

    SUBCASE("baseline grid is strictly positive definite") {
        const MatrixXd K = kpaths::gram_matrix(KernelSpec(0.5, 10.0, 1.0),
                                               TrainingGrid::equispaced(40.0, 41));
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }

    SUBCASE("PSD property on random grids") {
        std::mt19937_64 rng(123);
        std::uniform_real_distribution<double> u(0.0, 80.0);
        std::uniform_int_distribution<int> nd(2, 30);
        std::uniform_int_distribution<int> nu_pick(0, 2);
        const double nus[3] = {0.5, 1.5, 2.5};
        for (int rep = 0; rep < 100; ++rep) {
            const int n = nd(rng);
            std::vector<double> pts(static_cast<size_t>(n));
            for (double& p : pts) p = u(rng);
            std::sort(pts.begin(), pts.end());
            // Nudge duplicates apart so the grid stays strictly increasing.
            for (size_t i = 1; i < pts.size(); ++i)
                if (pts[i] <= pts[i - 1]) pts[i] = std::nextafter(pts[i - 1], 1e30);
            const KernelSpec s(nus[nu_pick(rng)], 5.0 + u(rng) / 4.0, 1.0);
            const MatrixXd K = kpaths::gram_matrix(s, TrainingGrid(pts));
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
            CHECK(es.eigenvalues().minCoeff() >= -1e-10 * K.trace());
        }
    }

    SUBCASE("jittered Cholesky factors near-singular Grams") {
        // nu = 5/2 with a long lengthscale on a fine grid is numerically
        // rank-deficient; the jittered factorization must still succeed and
        // reproduce the matrix to jitter accuracy.
        const MatrixXd K = kpaths::gram_matrix(KernelSpec(2.5, 20.0, 1.0),
                                               TrainingGrid::equispaced(40.0, 41));
        const MatrixXd L = kpaths::cholesky_with_jitter(K, 1.0);
        CHECK((L * L.transpose() - K).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("integrated kernel rows") {
    const KernelSpec s(0.5, 10.0, 1.0);
    const TrainingGrid g = TrainingGrid::equispaced(40.0, 41);

    SUBCASE("eval_time = 0 gives an exact zero vector") {
        const VectorXd q = kpaths::integrated_kernel_row(s, 0.0, g);
        CHECK(q.size() == 41);
        CHECK(q.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("matches kernel_integral entrywise") {
        const VectorXd q = kpaths::integrated_kernel_row(s, 10.0, TrainingGrid({0.0, 25.0}));
        CHECK(q(0) == doctest::Approx(6.3212055882855768).epsilon(1e-15));
        CHECK(q(1) == doctest::Approx(kpaths::kernel_integral(s, 10.0, 25.0)).epsilon(1e-15));
    }

    SUBCASE("entries positive and bounded by 2 sigma^2 ell at the horizon") {
        const VectorXd q = kpaths::integrated_kernel_row(s, 40.0, g);
        CHECK(q.minCoeff() > 0.0);
        CHECK(q.maxCoeff() <= 2.0 * s.sigma * s.sigma * s.ell);
    }

    SUBCASE("matrix form stacks rows") {
        const std::vector<double> times{0.0, 3.5, 12.0};
        const MatrixXd Q = kpaths::integrated_kernel_matrix(s, times, g);
        CHECK(Q.rows() == 3);
        CHECK(Q.cols() == 41);
        for (int i = 0; i < 3; ++i)
            CHECK((Q.row(i).transpose() -
                   kpaths::integrated_kernel_row(s, times[static_cast<size_t>(i)], g))
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
    }

    SUBCASE("negative eval_time is a domain error") {
        CHECK_THROWS_AS(kpaths::integrated_kernel_row(s, -0.5, g), std::domain_error);
    }
}

TEST_CASE("RKHS quadratic-form norms") {
    const KernelSpec s(0.5, 10.0, 1.0);

    SUBCASE("zero coefficients give zero norm") {
        const MatrixXd K = kpaths::gram_matrix(s, TrainingGrid::equispaced(40.0, 41));
        CHECK(kpaths::rkhs_norm_sq(K, VectorXd::Zero(41)) == 0.0);
    }

    SUBCASE("two-point quadratic form by hand") {
        // alpha = (1,1) on grid {0,10}: alpha' K alpha = 2 + 2 e^{-1}.
        const MatrixXd K = kpaths::gram_matrix(s, TrainingGrid({0.0, 10.0}));
        VectorXd a(2);
        a << 1.0, 1.0;
        CHECK(kpaths::rkhs_norm_sq(K, a) ==
              doctest::Approx(2.7357588823428847).epsilon(1e-15));
        VectorXd b(2);
        b << 2.0, 0.0;
        CHECK(kpaths::rkhs_norm_sq(K, b) == doctest::Approx(4.0).epsilon(1e-15));
    }

    SUBCASE("non-negative on random coefficients") {
        const MatrixXd K = kpaths::gram_matrix(KernelSpec(2.5, 20.0, 1.0),
                                               TrainingGrid::equispaced(40.0, 41));
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int rep = 0; rep < 20; ++rep) {
            VectorXd a(41);
            for (int i = 0; i < 41; ++i) a(i) = n(rng);
            const double q = kpaths::rkhs_norm_sq(K, a);
            CHECK(q >= -1e-10 * K.trace() * a.squaredNorm());
        }
    }

    SUBCASE("norm via jittered Cholesky matches the quadratic form") {
        const MatrixXd K = kpaths::gram_matrix(s, TrainingGrid::equispaced(40.0, 21));
        const MatrixXd L = kpaths::cholesky_with_jitter(K, s.sigma);
        std::mt19937_64 rng(9);
        std::normal_distribution<double> n(0.0, 1.0);
        VectorXd a(21);
        for (int i = 0; i < 21; ++i) a(i) = n(rng);
        const double via_chol =
            (L.transpose() * a).squaredNorm() - 1e-10 * s.sigma * s.sigma * a.squaredNorm();
        CHECK(kpaths::rkhs_norm_sq(K, a) == doctest::Approx(via_chol).epsilon(1e-10));
    }

    SUBCASE("dimension mismatch throws") {
        const MatrixXd K = kpaths::gram_matrix(s, TrainingGrid({0.0, 10.0}));
        CHECK_THROWS_AS(kpaths::rkhs_norm_sq(K, VectorXd::Zero(3)), std::invalid_argument);
    }
}
