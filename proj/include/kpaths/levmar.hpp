#pragma once

// Damped Levenberg-Marquardt for nonlinear least squares with box bounds via
// projection, plus a quasi-Newton (BFGS) fallback on the scalar objective for
// the rare case where LM stalls above tolerance.
//
// Convergence is declared on the mean-squared value of the leading n_dae
// residual rows (the DAE rows; ridge rows are excluded from the metric).
// Starting from zero coefficients matters: the damped step (J'J + lam*D)^-1
// g never moves along exact null directions of J, which keeps unpenalized
// coefficient blocks at their minimum-norm values.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

namespace kpaths {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Residual stack and its Jacobian at a parameter point.
struct ResidualEval {
    VectorXd r;
    MatrixXd J;  ///< empty unless requested
};

using ResidualFn = std::function<ResidualEval(const VectorXd& theta, bool want_jacobian)>;

struct LevMarOptions {
    double residual_tolerance = 1e-10;  ///< on mean-squared DAE residual
    double step_tolerance = 1e-12;
    double gradient_tolerance = 1e-14;
    int max_iterations = 200;
};

struct LevMarResult {
    VectorXd theta;
    double mean_sq_dae_residual = 0.0;
    double objective = 0.0;  ///< full squared norm incl. ridge rows
    int iterations = 0;
    std::string status;  ///< converged | small_step | small_gradient | stalled | max_iterations
    bool converged = false;
};

namespace detail {

inline VectorXd clamp_to_box(const VectorXd& v, const VectorXd& lo, const VectorXd& hi) {
    return v.cwiseMax(lo).cwiseMin(hi);
}

inline double mean_sq_head(const VectorXd& r, int n) {
    return r.head(n).squaredNorm() / n;
}

}  // namespace detail

inline LevMarResult levmar_solve(const ResidualFn& eval, const VectorXd& theta0,
                                 const VectorXd& lower, const VectorXd& upper,
                                 int n_dae_rows, const LevMarOptions& opt = {}) {
    LevMarResult out;
    VectorXd theta = detail::clamp_to_box(theta0, lower, upper);
    ResidualEval cur = eval(theta, true);
    if (!cur.r.allFinite())
        throw std::runtime_error("levmar_solve: non-finite residual at initial point");
    double cost = cur.r.squaredNorm();
    double lam = 1e-3;
    out.status = "max_iterations";

    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        const double msr = detail::mean_sq_head(cur.r, n_dae_rows);
        if (msr <= opt.residual_tolerance) {
            out.status = "converged";
            break;
        }
        const VectorXd g = cur.J.transpose() * cur.r;
        if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) {
            out.status = "small_gradient";
            break;
        }
        const MatrixXd JtJ = cur.J.transpose() * cur.J;
        const VectorXd D = JtJ.diagonal().cwiseMax(1e-12);

        bool accepted = false;
        bool tiny_step = false;
        for (int inner = 0; inner < 40; ++inner) {
            MatrixXd A = JtJ;
            A.diagonal() += lam * D;
            Eigen::LDLT<MatrixXd> ldlt(A);
            if (ldlt.info() != Eigen::Success) {
                lam *= 10.0;
                continue;
            }
            const VectorXd delta = ldlt.solve(-g);
            const VectorXd theta_new = detail::clamp_to_box(theta + delta, lower, upper);
            const VectorXd step = theta_new - theta;
            if (step.norm() <= opt.step_tolerance * (theta.norm() + opt.step_tolerance)) {
                tiny_step = true;
                break;
            }
            ResidualEval trial = eval(theta_new, false);
            if (trial.r.allFinite() && trial.r.squaredNorm() < cost) {
                theta = theta_new;
                cost = trial.r.squaredNorm();
                lam = std::max(lam * 0.3, 1e-14);
                accepted = true;
                break;
            }
            lam *= 4.0;  // non-finite or uphill: raise damping, retry
        }
        if (tiny_step) {
            out.status = "small_step";
            break;
        }
        if (!accepted) {
            out.status = "stalled";
            break;
        }
        cur = eval(theta, true);
    }

    out.theta = theta;
    cur = eval(theta, false);
    out.objective = cur.r.squaredNorm();
    out.mean_sq_dae_residual = detail::mean_sq_head(cur.r, n_dae_rows);
    if (out.mean_sq_dae_residual <= opt.residual_tolerance) {
        out.status = "converged";
        out.converged = true;
    }
    return out;
}

/// BFGS with backtracking line search on the scalar objective |r(theta)|^2,
/// used only when LM stalls above tolerance. Box bounds enforced by
/// projecting trial points; the inverse-Hessian approximation is reset
/// whenever projection bends the step or curvature turns non-positive.
inline LevMarResult bfgs_polish(const ResidualFn& eval, const VectorXd& theta0,
                                const VectorXd& lower, const VectorXd& upper,
                                int n_dae_rows, const LevMarOptions& opt = {}) {
    LevMarResult out;
    const auto n = theta0.size();
    VectorXd theta = detail::clamp_to_box(theta0, lower, upper);
    ResidualEval cur = eval(theta, true);
    double f = cur.r.squaredNorm();
    VectorXd g = 2.0 * cur.J.transpose() * cur.r;
    MatrixXd Hinv = MatrixXd::Identity(n, n);
    out.status = "max_iterations";

    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        if (detail::mean_sq_head(cur.r, n_dae_rows) <= opt.residual_tolerance) {
            out.status = "converged";
            break;
        }
        if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) {
            out.status = "small_gradient";
            break;
        }
        VectorXd dir = -(Hinv * g);
        if (dir.dot(g) >= 0.0) {  // not a descent direction: reset
            Hinv.setIdentity();
            dir = -g;
        }
        double step = 1.0;
        bool moved = false;
        VectorXd theta_new, g_new;
        ResidualEval trial;
        for (int ls = 0; ls < 50; ++ls) {
            theta_new = detail::clamp_to_box(theta + step * dir, lower, upper);
            trial = eval(theta_new, false);
            const double armijo =
                f + 1e-4 * g.dot(theta_new - theta);  // projected Armijo test
            if (trial.r.allFinite() && trial.r.squaredNorm() <= armijo) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            out.status = "stalled";
            break;
        }
        const VectorXd s = theta_new - theta;
        if (s.norm() <= opt.step_tolerance * (theta.norm() + opt.step_tolerance)) {
            theta = theta_new;
            cur = eval(theta, true);
            out.status = "small_step";
            break;
        }
        trial = eval(theta_new, true);
        g_new = 2.0 * trial.J.transpose() * trial.r;
        const VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-14) {
            const MatrixXd I = MatrixXd::Identity(n, n);
            const MatrixXd V = I - (s * yv.transpose()) / sy;
            Hinv = V * Hinv * V.transpose() + (s * s.transpose()) / sy;
        } else {
            Hinv.setIdentity();
        }
        theta = theta_new;
        cur = trial;
        f = cur.r.squaredNorm();
        g = g_new;
    }

    out.theta = theta;
    out.objective = cur.r.squaredNorm();
    out.mean_sq_dae_residual = detail::mean_sq_head(cur.r, n_dae_rows);
    if (out.mean_sq_dae_residual <= opt.residual_tolerance) {
        out.status = "converged";
        out.converged = true;
    }
    return out;
}

/// LM first; if it stalls above tolerance, BFGS from the best iterate, then
/// one more LM pass. Returns the best result seen.
inline LevMarResult solve_least_squares(const ResidualFn& eval, const VectorXd& theta0,
                                        const VectorXd& lower, const VectorXd& upper,
                                        int n_dae_rows, const LevMarOptions& opt = {}) {
    LevMarResult best = levmar_solve(eval, theta0, lower, upper, n_dae_rows, opt);
    if (best.converged) return best;
    LevMarResult b = bfgs_polish(eval, best.theta, lower, upper, n_dae_rows, opt);
    if (b.objective < best.objective) best = b;
    if (best.converged) return best;
    LevMarResult again = levmar_solve(eval, best.theta, lower, upper, n_dae_rows, opt);
    if (again.objective < best.objective) best = again;
    return best;
}

}  // namespace kpaths
