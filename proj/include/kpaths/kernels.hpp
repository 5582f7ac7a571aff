#pragma once

// Matérn kernel family: pointwise evaluation, running integrals from 0,
// Gram matrices, and RKHS quadratic-form norms.
//
// Only the three half-integer smoothness values used in practice are
// supported (nu = 1/2, 3/2, 5/2). The nu = 1/2 running integral has a
// closed form; the smoother kernels fall back to adaptive Gauss-Legendre
// quadrature at 1e-12 absolute tolerance.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace kpaths {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Matérn kernel parameters: k(t,t') = sigma^2 * m_nu(|t-t'| / ell).
struct KernelSpec {
    double nu = 0.5;     ///< smoothness, one of {0.5, 1.5, 2.5}
    double ell = 10.0;   ///< lengthscale (time units), > 0
    double sigma = 1.0;  ///< output scale, > 0

    KernelSpec() = default;
    KernelSpec(double nu_, double ell_, double sigma_ = 1.0)
        : nu(nu_), ell(ell_), sigma(sigma_) {
        validate();
    }

    void validate() const {
        if (nu != 0.5 && nu != 1.5 && nu != 2.5)
            throw std::invalid_argument("KernelSpec: nu must be one of 0.5, 1.5, 2.5");
        if (!(ell > 0.0)) throw std::invalid_argument("KernelSpec: lengthscale must be > 0");
        if (!(sigma > 0.0)) throw std::invalid_argument("KernelSpec: scale must be > 0");
    }
};

/// Collocation points t_1 < ... < t_N, all >= 0, N >= 2.
struct TrainingGrid {
    std::vector<double> points;

    TrainingGrid() = default;
    explicit TrainingGrid(std::vector<double> pts) : points(std::move(pts)) {
        validate();
    }

    static TrainingGrid equispaced(double T, int N) {
        if (!(T > 0.0) || N < 2)
            throw std::invalid_argument("TrainingGrid: equispaced needs T > 0 and N >= 2");
        std::vector<double> pts(static_cast<size_t>(N));
        for (int i = 0; i < N; ++i) pts[static_cast<size_t>(i)] = T * i / (N - 1);
        return TrainingGrid(std::move(pts));
    }

    void validate() const {
        if (points.size() < 2)
            throw std::invalid_argument("TrainingGrid: need at least 2 points");
        if (points.front() < 0.0)
            throw std::invalid_argument("TrainingGrid: points must be non-negative");
        for (size_t i = 1; i < points.size(); ++i)
            if (!(points[i] > points[i - 1]))
                throw std::invalid_argument("TrainingGrid: points must be strictly increasing");
    }

    int size() const { return static_cast<int>(points.size()); }
    double horizon() const { return points.back(); }
};

inline double kernel_eval(const KernelSpec& s, double t, double t_prime) {
    const double d = std::abs(t - t_prime) / s.ell;
    double m;
    if (s.nu == 0.5) {
        m = std::exp(-d);
    } else if (s.nu == 1.5) {
        const double q = std::sqrt(3.0) * d;
        m = (1.0 + q) * std::exp(-q);
    } else {
        const double q = std::sqrt(5.0) * d;
        m = (1.0 + q + q * q / 3.0) * std::exp(-q);
    }
    return s.sigma * s.sigma * m;
}

namespace detail {

// 15-point Gauss-Legendre nodes/weights on [-1, 1].
inline const double* gl15_nodes() {
    static const double x[15] = {
        -0.98799251802048537741, -0.93727339240070595139, -0.84820658341042720618,
        -0.72441773136017006962, -0.57097217260853883047, -0.39415134707756338539,
        -0.20119409399743451439,  0.0,                     0.20119409399743451439,
         0.39415134707756338539,  0.57097217260853883047,  0.72441773136017006962,
         0.84820658341042720618,  0.93727339240070595139,  0.98799251802048537741};
    return x;
}
inline const double* gl15_weights() {
    static const double w[15] = {
        0.03075324199611864651, 0.07036604748810806886, 0.10715922046717177296,
        0.13957067792615390767, 0.16626920581699378143, 0.18616100001556187826,
        0.19843148532711124554, 0.20257824192556089793, 0.19843148532711124554,
        0.18616100001556187826, 0.16626920581699378143, 0.13957067792615390767,
        0.10715922046717177296, 0.07036604748810806886, 0.03075324199611864651};
    return w;
}

template <typename F>
double gl15(const F& f, double a, double b) {
    const double* xs = gl15_nodes();
    const double* ws = gl15_weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < 15; ++i) acc += ws[i] * f(mid + half * xs[i]);
    return half * acc;
}

template <typename F>
double adaptive_gl15(const F& f, double a, double b, double tol, int depth = 0) {
    const double whole = gl15(f, a, b);
    const double mid = 0.5 * (a + b);
    const double halves = gl15(f, a, mid) + gl15(f, mid, b);
    if (std::abs(whole - halves) < tol || depth > 48) return halves;
    return adaptive_gl15(f, a, mid, 0.5 * tol, depth + 1) +
           adaptive_gl15(f, mid, b, 0.5 * tol, depth + 1);
}

// Closed form of int_0^u exp(-|tau - c|/ell) dtau for u, c >= 0.
inline double exp_integral_piecewise(double ell, double u, double c) {
    if (u <= c) return ell * (std::exp((u - c) / ell) - std::exp(-c / ell));
    return ell * (1.0 - std::exp(-c / ell)) + ell * (1.0 - std::exp(-(u - c) / ell));
}

}  // namespace detail

/// int_0^upper k(tau, center) dtau. Closed form for nu = 1/2, adaptive
/// quadrature (abs tol 1e-12, split at the |tau-center| kink) otherwise.
inline double kernel_integral(const KernelSpec& s, double upper, double center) {
    if (upper < 0.0) throw std::domain_error("kernel_integral: upper must be >= 0");
    if (center < 0.0) throw std::domain_error("kernel_integral: center must be >= 0");
    if (upper == 0.0) return 0.0;
    if (s.nu == 0.5)
        return s.sigma * s.sigma * detail::exp_integral_piecewise(s.ell, upper, center);
    auto f = [&](double tau) { return kernel_eval(s, tau, center); };
    constexpr double tol = 1e-12;
    if (center > 0.0 && center < upper)
        return detail::adaptive_gl15(f, 0.0, center, 0.5 * tol) +
               detail::adaptive_gl15(f, center, upper, 0.5 * tol);
    return detail::adaptive_gl15(f, 0.0, upper, tol);
}

inline MatrixXd gram_matrix(const KernelSpec& s, const TrainingGrid& grid) {
    const int n = grid.size();
    MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = kernel_eval(s, grid.points[static_cast<size_t>(i)],
                                         grid.points[static_cast<size_t>(j)]);
            K(i, j) = v;
            K(j, i) = v;
        }
    return K;
}

/// Row vector of kernel integrals int_0^t k(tau, t_j) dtau over the grid;
/// contracting it with derivative coefficients yields level variables.
inline VectorXd integrated_kernel_row(const KernelSpec& s, double eval_time,
                                      const TrainingGrid& grid) {
    if (eval_time < 0.0)
        throw std::domain_error("integrated_kernel_row: eval_time must be >= 0");
    const int n = grid.size();
    VectorXd q(n);
    for (int j = 0; j < n; ++j)
        q(j) = kernel_integral(s, eval_time, grid.points[static_cast<size_t>(j)]);
    return q;
}

/// Matrix of integrated kernel rows for a batch of evaluation times.
inline MatrixXd integrated_kernel_matrix(const KernelSpec& s,
                                         const std::vector<double>& eval_times,
                                         const TrainingGrid& grid) {
    MatrixXd Q(static_cast<Eigen::Index>(eval_times.size()), grid.size());
    for (size_t i = 0; i < eval_times.size(); ++i)
        Q.row(static_cast<Eigen::Index>(i)) =
            integrated_kernel_row(s, eval_times[i], grid).transpose();
    return Q;
}

/// coeffs' * K * coeffs (Eq.-12-style RKHS norm of a kernel expansion).
inline double rkhs_norm_sq(const MatrixXd& gram, const VectorXd& coeffs) {
    if (gram.rows() != coeffs.size())
        throw std::invalid_argument("rkhs_norm_sq: coefficient length != Gram size");
    return coeffs.dot(gram * coeffs);
}

/// Cholesky factor L with L L' = K + jitter*I. Dense Matérn Gram matrices on
/// regular grids are near-singular; the jitter (1e-10 sigma^2) sits below all
/// solver tolerances.
inline MatrixXd cholesky_with_jitter(const MatrixXd& gram, double sigma) {
    MatrixXd Kj = gram;
    const double jitter = 1e-10 * sigma * sigma;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(Kj);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("cholesky_with_jitter: Gram factorization failed");
    return llt.matrixL();
}

}  // namespace kpaths
