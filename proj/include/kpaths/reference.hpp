#pragma once

// Independent reference machinery used to validate kernel fits: steady-state
// location, forward integration of the DAE with per-stage elimination of the
// algebraic variables, shooting on the costate initial condition, a trapezoid
// two-point BVP solver with Richardson extrapolation, the closed-form
// fundamental price of the linear asset model, and sup-norm relative errors.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "model.hpp"

namespace kpaths {

// ---------------------------------------------------------------------------
// Steady states
// ---------------------------------------------------------------------------

struct SteadyState {
    VectorXd x, mu, y;
};

namespace detail {

/// Stationary residual [F; r mu - mu .* G; H] and its Jacobian in z = (x, mu, y).
inline VectorXd stationary_residual(const ModelSpec& m, const VectorXd& z) {
    const int M = m.state_dim, P = m.jump_dim;
    const VectorXd x = z.head(M), mu = z.segment(M, M), y = z.tail(P);
    VectorXd s(2 * M + P);
    s.head(M) = m.F(x, mu, y);
    s.segment(M, M) = m.discount_rate * mu - mu.cwiseProduct(m.G(x, mu, y));
    if (P > 0) s.tail(P) = m.H(x, mu, y);
    return s;
}

inline MatrixXd stationary_jacobian(const ModelSpec& m, const VectorXd& z) {
    const int M = m.state_dim, P = m.jump_dim;
    const VectorXd x = z.head(M), mu = z.segment(M, M), y = z.tail(P);
    const MapJacobian Fd = m.F_jac(x, mu, y);
    const MapJacobian Gd = m.G_jac(x, mu, y);
    const VectorXd G = m.G(x, mu, y);
    MatrixXd J = MatrixXd::Zero(2 * M + P, 2 * M + P);
    J.block(0, 0, M, M) = Fd.dx;
    J.block(0, M, M, M) = Fd.dmu;
    if (P > 0) J.block(0, 2 * M, M, P) = Fd.dy;
    J.block(M, 0, M, M) = -(mu.asDiagonal() * Gd.dx);
    J.block(M, M, M, M) = m.discount_rate * MatrixXd::Identity(M, M) -
                          MatrixXd(G.asDiagonal()) - mu.asDiagonal() * Gd.dmu;
    if (P > 0) {
        J.block(M, 2 * M, M, P) = -(mu.asDiagonal() * Gd.dy);
        const MapJacobian Hd = m.H_jac(x, mu, y);
        J.block(2 * M, 0, P, M) = Hd.dx;
        J.block(2 * M, M, P, M) = Hd.dmu;
        J.block(2 * M, 2 * M, P, P) = Hd.dy;
    }
    return J;
}

inline bool damped_newton(const std::function<VectorXd(const VectorXd&)>& resid,
                          const std::function<MatrixXd(const VectorXd&)>& jac,
                          VectorXd& z, double tol, int max_iter) {
    VectorXd s = resid(z);
    if (!s.allFinite()) return false;
    for (int it = 0; it < max_iter; ++it) {
        if (s.lpNorm<Eigen::Infinity>() <= tol) return true;
        Eigen::FullPivLU<MatrixXd> lu(jac(z));
        if (!lu.isInvertible()) return false;
        const VectorXd delta = lu.solve(-s);
        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls) {
            const VectorXd z_new = z + step * delta;
            const VectorXd s_new = resid(z_new);
            if (s_new.allFinite() && s_new.norm() < s.norm()) {
                z = z_new;
                s = s_new;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) return false;
    }
    return s.lpNorm<Eigen::Infinity>() <= tol;
}

}  // namespace detail

/// Multi-start damped Newton on the stationary system [F; r mu - mu G; H].
/// Starts are drawn from a fixed internal seed so repeated calls agree;
/// distinct roots (more than 1e-6 apart) are returned sorted by first state.
inline std::vector<SteadyState> find_steady_states(const ModelSpec& model,
                                                   int n_starts = 200,
                                                   double tol = 1e-12) {
    model.validate();
    const int M = model.state_dim, P = model.jump_dim;
    const int dim = 2 * M + P;
    const auto resid = [&](const VectorXd& z) { return detail::stationary_residual(model, z); };
    const auto jac = [&](const VectorXd& z) { return detail::stationary_jacobian(model, z); };

    std::mt19937_64 rng(987654321u);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<VectorXd> roots;
    for (int s = 0; s < n_starts; ++s) {
        VectorXd z(dim);
        // Log-uniform starts on [0.05, 20]: economic variables are positive
        // and may sit on very different scales.
        for (int i = 0; i < dim; ++i)
            z(i) = 0.05 * std::pow(20.0 / 0.05, unif(rng));
        if (!detail::damped_newton(resid, jac, z, tol, 100)) continue;
        if (!z.allFinite()) continue;
        bool dup = false;
        for (const VectorXd& r : roots)
            if ((r - z).lpNorm<Eigen::Infinity>() < 1e-6) {
                dup = true;
                break;
            }
        if (!dup) roots.push_back(z);
    }
    std::sort(roots.begin(), roots.end(),
              [](const VectorXd& a, const VectorXd& b) { return a(0) < b(0); });
    std::vector<SteadyState> out;
    for (const VectorXd& z : roots) {
        SteadyState ss;
        ss.x = z.head(M);
        ss.mu = z.segment(M, M);
        ss.y = z.tail(P);
        out.push_back(std::move(ss));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward integration with algebraic elimination
// ---------------------------------------------------------------------------

struct OdeOptions {
    // Saddle-path integrations amplify local error by e^{lambda_u (T - t)},
    // a factor of ~1e3 over a 40-unit horizon, so the defaults are tight.
    double rel_tol = 1e-13;
    double abs_tol = 1e-14;
    double initial_step = 1e-3;
    double min_step = 1e-12;
    long max_steps = 2000000;
    double blowup = 1e8;  ///< |x| or |mu| beyond this counts as divergence
};

/// Solve H(x, mu, y) = 0 for y by damped Newton from y_guess. Returns nothing
/// if dH/dy is singular or the iteration fails to contract.
inline std::optional<VectorXd> eliminate_jumps(const ModelSpec& model, const VectorXd& x,
                                               const VectorXd& mu, const VectorXd& y_guess,
                                               double tol = 1e-13) {
    if (model.jump_dim == 0) return VectorXd(0);
    VectorXd y = y_guess;
    const auto resid = [&](const VectorXd& yy) { return model.H(x, mu, yy); };
    const auto jac = [&](const VectorXd& yy) { return model.H_jac(x, mu, yy).dy; };
    if (detail::damped_newton(resid, jac, y, tol, 60)) return y;
    return std::nullopt;
}

namespace detail {

// Dormand-Prince 5(4) tableau.
inline const double* dp_c() {
    static const double c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    return c;
}
inline const double* dp_a(int row) {
    static const double a[7][6] = {
        {0, 0, 0, 0, 0, 0},
        {1.0 / 5, 0, 0, 0, 0, 0},
        {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
        {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
        {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
    return a[row];
}
inline const double* dp_b5() {
    static const double b[7] = {35.0 / 384,      0.0,          500.0 / 1113, 125.0 / 192,
                                -2187.0 / 6784, 11.0 / 84, 0.0};
    return b;
}
inline const double* dp_b4() {
    static const double b[7] = {5179.0 / 57600,   0.0,           7571.0 / 16695, 393.0 / 640,
                                -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
    return b;
}

}  // namespace detail

/// Integrate xdot = F, mudot = r mu - mu .* G forward from (x0, mu0) with the
/// jumps eliminated from H = 0 at every stage (warm-started Newton). Records
/// the solution at the requested sample times (sorted, within [0, horizon]).
/// If the state diverges or the elimination fails, integration stops early
/// and the trajectory is marked truncated; samples collected so far remain.
inline Trajectory integrate_dae(const ModelSpec& model, const VectorXd& x0,
                                const VectorXd& mu0, const std::vector<double>& sample_times,
                                const OdeOptions& opt = {}) {
    model.validate();
    const int M = model.state_dim;
    if (x0.size() != M || mu0.size() != M)
        throw std::invalid_argument("integrate_dae: x0/mu0 must have length state_dim");
    if (sample_times.empty())
        throw std::invalid_argument("integrate_dae: sample_times must be non-empty");
    for (size_t i = 0; i < sample_times.size(); ++i) {
        if (sample_times[i] < 0.0)
            throw std::invalid_argument("integrate_dae: sample times must be >= 0");
        if (i > 0 && sample_times[i] < sample_times[i - 1])
            throw std::invalid_argument("integrate_dae: sample times must be sorted");
    }

    Trajectory tr;
    VectorXd z(2 * M);
    z.head(M) = x0;
    z.tail(M) = mu0;
    VectorXd y_warm = detail::constant_vector(model.jump_dim, 1.0);
    if (model.jump_dim > 0) {
        auto y_init = eliminate_jumps(model, x0, mu0, y_warm);
        if (!y_init) {
            tr.truncated = true;
            return tr;
        }
        y_warm = *y_init;
    }

    // Right-hand side in z = (x, mu); fails when elimination or the model map
    // leaves the admissible domain.
    const auto rhs = [&](const VectorXd& zz, VectorXd& out) -> bool {
        const VectorXd x = zz.head(M), mu = zz.tail(M);
        if (!zz.allFinite() || zz.lpNorm<Eigen::Infinity>() > opt.blowup) return false;
        VectorXd y(0);
        if (model.jump_dim > 0) {
            auto sol = eliminate_jumps(model, x, mu, y_warm);
            if (!sol) return false;
            y = *sol;
            y_warm = y;
        }
        const VectorXd F = model.F(x, mu, y);
        const VectorXd G = model.G(x, mu, y);
        if (!F.allFinite() || !G.allFinite()) return false;
        out.resize(2 * M);
        out.head(M) = F;
        out.tail(M) = model.discount_rate * mu - mu.cwiseProduct(G);
        return true;
    };

    const auto record = [&](double t, const VectorXd& zz) {
        const VectorXd x = zz.head(M), mu = zz.tail(M);
        VectorXd y(0);
        if (model.jump_dim > 0) {
            auto sol = eliminate_jumps(model, x, mu, y_warm);
            y = sol ? *sol : y_warm;
        }
        tr.times.push_back(t);
        tr.x_path.push_back(x);
        tr.mu_path.push_back(mu);
        tr.y_path.push_back(y);
        tr.xdot_path.push_back(model.F(x, mu, y));
        tr.mudot_path.push_back(model.discount_rate * mu -
                                mu.cwiseProduct(model.G(x, mu, y)));
    };

    double t = 0.0;
    size_t next_sample = 0;
    while (next_sample < sample_times.size() && sample_times[next_sample] <= 0.0) {
        record(0.0, z);
        ++next_sample;
    }
    double h = opt.initial_step;
    VectorXd k[7];
    if (!rhs(z, k[0])) {
        tr.truncated = true;
        return tr;
    }
    long steps = 0;
    while (next_sample < sample_times.size()) {
        if (++steps > opt.max_steps) {
            tr.truncated = true;
            return tr;
        }
        const double t_target = sample_times[next_sample];
        h = std::min(h, t_target - t);
        bool ok = true;
        for (int s = 1; s < 7; ++s) {
            VectorXd zs = z;
            const double* a = detail::dp_a(s);
            for (int j = 0; j < s; ++j) zs += h * a[j] * k[j];
            if (!rhs(zs, k[s])) {
                ok = false;
                break;
            }
        }
        VectorXd z5 = z, z4 = z;
        if (ok) {
            for (int s = 0; s < 7; ++s) {
                z5 += h * detail::dp_b5()[s] * k[s];
                z4 += h * detail::dp_b4()[s] * k[s];
            }
            ok = z5.allFinite() && z4.allFinite();
        }
        double err = std::numeric_limits<double>::infinity();
        if (ok) {
            err = 0.0;
            for (int i = 0; i < 2 * M; ++i) {
                const double scale =
                    opt.abs_tol + opt.rel_tol * std::max(std::abs(z(i)), std::abs(z5(i)));
                err = std::max(err, std::abs(z5(i) - z4(i)) / scale);
            }
        }
        if (ok && err <= 1.0) {
            t += h;
            z = z5;
            k[0] = k[6];  // first-same-as-last
            while (next_sample < sample_times.size() &&
                   sample_times[next_sample] <= t + 1e-14 * std::max(1.0, t)) {
                record(sample_times[next_sample], z);
                ++next_sample;
            }
            h *= std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 1.0, 5.0);
        } else {
            h *= ok ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.5) : 0.25;
        }
        if (h < opt.min_step) {
            tr.truncated = true;
            return tr;
        }
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Shooting on the costate initial condition
// ---------------------------------------------------------------------------

struct ShootingResult {
    VectorXd mu0;
    Trajectory path;  ///< sampled at the caller's times
    int iterations = 0;
    double psi_norm = 0.0;            ///< |x(T) - x*| at the returned mu0
    double jacobian_condition = 0.0;  ///< cond of the finite-difference dPsi/dmu0
    bool converged = false;
};

namespace detail {

inline std::optional<VectorXd> shooting_terminal_state(const ModelSpec& model,
                                                       const VectorXd& mu0, double horizon,
                                                       const OdeOptions& opt) {
    Trajectory tr = integrate_dae(model, model.initial_state, mu0, {horizon}, opt);
    if (tr.truncated || tr.x_path.empty()) return std::nullopt;
    return tr.x_path.back();
}

}  // namespace detail

/// Find mu0 such that the forward path reaches x(T) = x_target. Scalar
/// problems use bisection on the bracket [mu0_low, mu0_high] (paths that
/// diverge early are classified by which side of the stable manifold they
/// fall on via their last finite state); multi-state problems run a damped
/// Newton with a finite-difference Jacobian from the midpoint of the bracket.
inline ShootingResult shooting_solve(const ModelSpec& model, double horizon,
                                     const VectorXd& x_target, const VectorXd& mu0_low,
                                     const VectorXd& mu0_high,
                                     const std::vector<double>& sample_times,
                                     double tol = 1e-13, const OdeOptions& ode_opt = {}) {
    model.validate();
    const int M = model.state_dim;
    if (x_target.size() != M || mu0_low.size() != M || mu0_high.size() != M)
        throw std::invalid_argument("shooting_solve: vector arguments must have length state_dim");
    if (!(horizon > 0.0)) throw std::invalid_argument("shooting_solve: horizon must be > 0");
    if (((mu0_high - mu0_low).array() <= 0.0).any())
        throw std::invalid_argument("shooting_solve: bracket must satisfy low < high");

    ShootingResult out;

    // Psi(mu0) = x(T) - x*, with early divergence mapped to +/- infinity by
    // the sign of the last finite deviation (undershoot vs overshoot).
    const auto psi_scalar = [&](double m0) -> double {
        Trajectory tr = integrate_dae(model, model.initial_state,
                                      detail::constant_vector(1, m0), {horizon}, ode_opt);
        if (!tr.truncated && !tr.x_path.empty())
            return tr.x_path.back()(0) - x_target(0);
        // Integrate again recording intermediate points to learn the escape side.
        std::vector<double> probe;
        for (int i = 0; i <= 400; ++i) probe.push_back(horizon * i / 400.0);
        tr = integrate_dae(model, model.initial_state, detail::constant_vector(1, m0),
                           probe, ode_opt);
        double last = model.initial_state(0);
        for (const VectorXd& x : tr.x_path)
            if (std::isfinite(x(0))) last = x(0);
        return last >= x_target(0) ? detail::infinity() : -detail::infinity();
    };

    if (M == 1) {
        double lo = mu0_low(0), hi = mu0_high(0);
        double flo = psi_scalar(lo), fhi = psi_scalar(hi);
        if (!(flo < 0.0) || !(fhi > 0.0))
            if (!(flo > 0.0 && fhi < 0.0))
                throw std::invalid_argument(
                    "shooting_solve: bracket does not straddle the target");
        const bool increasing = flo < 0.0;
        int it = 0;
        for (; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double fm = psi_scalar(mid);
            if (std::isfinite(fm) && std::abs(fm) <= tol) {
                lo = hi = mid;
                break;
            }
            if ((fm < 0.0) == increasing)
                lo = mid;
            else
                hi = mid;
            if (hi - lo <= 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
        out.mu0 = detail::constant_vector(1, 0.5 * (lo + hi));
        out.iterations = it;
    } else {
        // The sensitivity of x(T) to mu(0) grows like e^{lambda_u T}, so at a
        // long horizon a Newton iteration escapes to infinity from any start
        // that is not already exponentially close to the saddle. Solve the
        // terminal condition on a short horizon first and lengthen it in
        // fixed increments, warm-starting each stage from the last solution.
        const auto psi_at = [&](const VectorXd& m0, double T) -> std::optional<VectorXd> {
            auto xT = detail::shooting_terminal_state(model, m0, T, ode_opt);
            if (!xT) return std::nullopt;
            return VectorXd(*xT - x_target);
        };
        VectorXd mu0 = 0.5 * (mu0_low + mu0_high);
        std::vector<double> stages;
        for (double T = std::min(10.0, horizon); T < horizon; T += 10.0)
            stages.push_back(T);
        stages.push_back(horizon);
        int total_it = 0;
        for (size_t si = 0; si < stages.size(); ++si) {
            const double T = stages[si];
            auto p = psi_at(mu0, T);
            if (!p && si == 0 && M <= 4) {
                // Coarse scan of the box for a start with a finite residual.
                const int per_dim = 5;
                double best_norm = detail::infinity();
                const int cells = static_cast<int>(std::pow(per_dim, M));
                for (int cell = 0; cell < cells; ++cell) {
                    VectorXd cand(M);
                    int rem = cell;
                    for (int d = 0; d < M; ++d) {
                        cand(d) = mu0_low(d) + (rem % per_dim + 0.5) / per_dim *
                                                   (mu0_high(d) - mu0_low(d));
                        rem /= per_dim;
                    }
                    auto pc = psi_at(cand, T);
                    if (pc && pc->lpNorm<Eigen::Infinity>() < best_norm) {
                        best_norm = pc->lpNorm<Eigen::Infinity>();
                        mu0 = cand;
                        p = pc;
                    }
                }
            }
            if (!p)
                throw std::invalid_argument(
                    "shooting_solve: no finite start in the bracket box");
            for (int it = 0; it < 60 && p->lpNorm<Eigen::Infinity>() > tol;
                 ++it, ++total_it) {
                MatrixXd J(M, M);
                bool jac_ok = true;
                for (int j = 0; j < M && jac_ok; ++j) {
                    const double dh = 1e-7 * std::max(1.0, std::abs(mu0(j)));
                    VectorXd mp = mu0;
                    mp(j) += dh;
                    auto pp = psi_at(mp, T);
                    if (!pp) {
                        mp(j) = mu0(j) - dh;
                        pp = psi_at(mp, T);
                        if (!pp) {
                            jac_ok = false;
                            break;
                        }
                        J.col(j) = (*p - *pp) / dh;
                    } else {
                        J.col(j) = (*pp - *p) / dh;
                    }
                }
                if (!jac_ok) break;
                Eigen::FullPivLU<MatrixXd> lu(J);
                if (!lu.isInvertible())
                    throw std::runtime_error("shooting_solve: singular shooting Jacobian");
                const VectorXd delta = lu.solve(-*p);
                double step = 1.0;
                bool moved = false;
                for (int ls = 0; ls < 40; ++ls) {
                    const VectorXd cand = (mu0 + step * delta)
                                              .cwiseMax(mu0_low)
                                              .cwiseMin(mu0_high);
                    auto pc = psi_at(cand, T);
                    if (pc && pc->norm() < p->norm()) {
                        mu0 = cand;
                        p = pc;
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if (!moved) break;
            }
        }
        out.mu0 = mu0;
        out.iterations = total_it;
    }

    // Conditioning of the finite-difference shooting map at the solution.
    {
        const int n = M;
        MatrixXd J(n, n);
        auto base = detail::shooting_terminal_state(model, out.mu0, horizon, ode_opt);
        if (base) {
            for (int j = 0; j < n; ++j) {
                const double dh = 1e-7 * std::max(1.0, std::abs(out.mu0(j)));
                VectorXd mp = out.mu0;
                mp(j) += dh;
                auto xp = detail::shooting_terminal_state(model, mp, horizon, ode_opt);
                if (!xp) {
                    J.setConstant(std::numeric_limits<double>::quiet_NaN());
                    break;
                }
                J.col(j) = (*xp - *base) / dh;
            }
            if (J.allFinite()) {
                Eigen::JacobiSVD<MatrixXd> svd(J);
                const double smin = svd.singularValues().minCoeff();
                out.jacobian_condition =
                    smin > 0.0 ? svd.singularValues().maxCoeff() / smin : detail::infinity();
            }
        }
    }

    Trajectory tr = integrate_dae(model, model.initial_state, out.mu0, sample_times, ode_opt);
    out.path = std::move(tr);
    auto xT = detail::shooting_terminal_state(model, out.mu0, horizon, ode_opt);
    out.psi_norm = xT ? (*xT - x_target).lpNorm<Eigen::Infinity>() : detail::infinity();
    out.converged = out.psi_norm <= 1e-8 * std::max(1.0, x_target.lpNorm<Eigen::Infinity>());
    return out;
}

// ---------------------------------------------------------------------------
// Two-point BVP by trapezoid collocation, with Richardson extrapolation
// ---------------------------------------------------------------------------

/// Solve the saddle-path BVP x(0) = x0, x(T) = x_target on n equispaced
/// nodes. Unknowns are (x, mu, y) at every node; equations are the two
/// boundary pins, H = 0 at every node, and trapezoid discretizations of the
/// state and costate equations on every interval. Second-order accurate.
inline Trajectory bvp_trapezoid(const ModelSpec& model, double horizon, int n_nodes,
                                const VectorXd& x_target, const SteadyState& guess,
                                double tol = 1e-12) {
    model.validate();
    const int M = model.state_dim, P = model.jump_dim;
    if (n_nodes < 2) throw std::invalid_argument("bvp_trapezoid: need at least 2 nodes");
    if (x_target.size() != M)
        throw std::invalid_argument("bvp_trapezoid: x_target must have length state_dim");
    const int vars = 2 * M + P;
    const int n = n_nodes;
    const double h = horizon / (n - 1);

    // Node accessors into the stacked unknown vector.
    const auto xat = [&](const VectorXd& u, int i) { return u.segment(i * vars, M); };
    const auto muat = [&](const VectorXd& u, int i) { return u.segment(i * vars + M, M); };
    const auto yat = [&](const VectorXd& u, int i) { return u.segment(i * vars + 2 * M, P); };

    const auto rhs_pair = [&](const VectorXd& x, const VectorXd& mu, const VectorXd& y) {
        VectorXd f(2 * M);
        f.head(M) = model.F(x, mu, y);
        f.tail(M) = model.discount_rate * mu - mu.cwiseProduct(model.G(x, mu, y));
        return f;
    };

    const auto resid = [&](const VectorXd& u) {
        VectorXd r(n * vars);
        int row = 0;
        r.segment(row, M) = xat(u, 0) - model.initial_state;
        row += M;
        r.segment(row, M) = xat(u, n - 1) - x_target;
        row += M;
        for (int i = 0; i < n; ++i) {
            if (P > 0) {
                r.segment(row, P) = model.H(xat(u, i), muat(u, i), yat(u, i));
                row += P;
            }
        }
        for (int i = 0; i + 1 < n; ++i) {
            const VectorXd fi = rhs_pair(xat(u, i), muat(u, i), yat(u, i));
            const VectorXd fj = rhs_pair(xat(u, i + 1), muat(u, i + 1), yat(u, i + 1));
            VectorXd zi(2 * M), zj(2 * M);
            zi.head(M) = xat(u, i);
            zi.tail(M) = muat(u, i);
            zj.head(M) = xat(u, i + 1);
            zj.tail(M) = muat(u, i + 1);
            r.segment(row, 2 * M) = zj - zi - 0.5 * h * (fi + fj);
            row += 2 * M;
        }
        return r;
    };

    // Dense Jacobian: block bidiagonal in the node ordering.
    const auto jacobian = [&](const VectorXd& u) {
        MatrixXd J = MatrixXd::Zero(n * vars, n * vars);
        int row = 0;
        J.block(row, 0, M, M).setIdentity();
        row += M;
        J.block(row, (n - 1) * vars, M, M).setIdentity();
        row += M;
        for (int i = 0; i < n; ++i) {
            if (P > 0) {
                const MapJacobian Hd = model.H_jac(xat(u, i), muat(u, i), yat(u, i));
                J.block(row, i * vars, P, M) = Hd.dx;
                J.block(row, i * vars + M, P, M) = Hd.dmu;
                J.block(row, i * vars + 2 * M, P, P) = Hd.dy;
                row += P;
            }
        }
        const auto rhs_jac = [&](const VectorXd& x, const VectorXd& mu, const VectorXd& y) {
            const MapJacobian Fd = model.F_jac(x, mu, y);
            const MapJacobian Gd = model.G_jac(x, mu, y);
            const VectorXd G = model.G(x, mu, y);
            MatrixXd D = MatrixXd::Zero(2 * M, vars);
            D.block(0, 0, M, M) = Fd.dx;
            D.block(0, M, M, M) = Fd.dmu;
            if (P > 0) D.block(0, 2 * M, M, P) = Fd.dy;
            D.block(M, 0, M, M) = -(mu.asDiagonal() * Gd.dx);
            D.block(M, M, M, M) = model.discount_rate * MatrixXd::Identity(M, M) -
                                  MatrixXd(G.asDiagonal()) - mu.asDiagonal() * Gd.dmu;
            if (P > 0) D.block(M, 2 * M, M, P) = -(mu.asDiagonal() * Gd.dy);
            return D;
        };
        MatrixXd Z = MatrixXd::Zero(2 * M, vars);  // d(z)/d(node vars)
        Z.block(0, 0, M, M).setIdentity();
        Z.block(M, M, M, M).setIdentity();
        for (int i = 0; i + 1 < n; ++i) {
            const MatrixXd Di = rhs_jac(xat(u, i), muat(u, i), yat(u, i));
            const MatrixXd Dj = rhs_jac(xat(u, i + 1), muat(u, i + 1), yat(u, i + 1));
            J.block(row, i * vars, 2 * M, vars) = -Z - 0.5 * h * Di;
            J.block(row, (i + 1) * vars, 2 * M, vars) = Z - 0.5 * h * Dj;
            row += 2 * M;
        }
        return J;
    };

    // Initial iterate: straight line from x0 to the target in x, the guessed
    // steady-state values elsewhere.
    VectorXd u(n * vars);
    for (int i = 0; i < n; ++i) {
        const double w = static_cast<double>(i) / (n - 1);
        u.segment(i * vars, M) = (1.0 - w) * model.initial_state + w * x_target;
        u.segment(i * vars + M, M) = guess.mu;
        if (P > 0) u.segment(i * vars + 2 * M, P) = guess.y;
    }
    if (!detail::damped_newton(resid, jacobian, u, tol, 200))
        throw std::runtime_error("bvp_trapezoid: Newton iteration failed to converge");

    Trajectory tr;
    for (int i = 0; i < n; ++i) {
        tr.times.push_back(i * h);
        tr.x_path.push_back(xat(u, i));
        tr.mu_path.push_back(muat(u, i));
        tr.y_path.push_back(yat(u, i));
    }
    return tr;
}

/// Richardson-extrapolated trapezoid solution: combine the n-node and
/// (2n - 1)-node fits as (4 x_fine - x_coarse) / 3 at the coarse nodes,
/// cancelling the O(h^2) error term.
inline Trajectory bvp_richardson(const ModelSpec& model, double horizon, int n_nodes,
                                 const VectorXd& x_target, const SteadyState& guess,
                                 double tol = 1e-12) {
    const Trajectory coarse = bvp_trapezoid(model, horizon, n_nodes, x_target, guess, tol);
    const Trajectory fine =
        bvp_trapezoid(model, horizon, 2 * n_nodes - 1, x_target, guess, tol);
    Trajectory out;
    out.times = coarse.times;
    for (size_t i = 0; i < coarse.times.size(); ++i) {
        const size_t j = 2 * i;  // fine grid contains every coarse node
        out.x_path.push_back((4.0 * fine.x_path[j] - coarse.x_path[i]) / 3.0);
        out.mu_path.push_back((4.0 * fine.mu_path[j] - coarse.mu_path[i]) / 3.0);
        out.y_path.push_back((4.0 * fine.y_path[j] - coarse.y_path[i]) / 3.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Closed-form fundamental price for the linear dividend model
// ---------------------------------------------------------------------------

/// Fundamental price mu_f(t) = integral_0^inf e^{-r tau} x(t + tau) d tau for
/// the linear flow xdot = c + g x (requires r > g): the dividend path is
/// x(t) = (x0 + c/g) e^{g t} - c/g, so the integral evaluates to
/// (-c/g)/r + (x(t) + c/g)/(r - g).
inline double asset_fundamental_price(double x0, double c, double g, double r, double t) {
    if (t < 0.0) throw std::domain_error("asset_fundamental_price: t must be >= 0");
    if (!(r > g)) throw std::invalid_argument("asset_fundamental_price: requires r > g");
    if (g == 0.0) throw std::invalid_argument("asset_fundamental_price: requires g != 0");
    const double xt = (x0 + c / g) * std::exp(g * t) - c / g;
    return (-c / g) / r + (xt + c / g) / (r - g);
}

/// The same price by adaptive quadrature, truncated where the discount factor
/// falls below 1e-14. Used to cross-check the closed form.
inline double asset_fundamental_price_quadrature(double x0, double c, double g, double r,
                                                 double t) {
    if (t < 0.0) throw std::domain_error("asset_fundamental_price_quadrature: t must be >= 0");
    if (!(r > 0.0))
        throw std::invalid_argument("asset_fundamental_price_quadrature: requires r > 0");
    const double tau_max = -std::log(1e-14) / r;
    const auto dividend = [&](double tau) {
        const double xs = (x0 + c / g) * std::exp(g * (t + tau)) - c / g;
        return std::exp(-r * tau) * xs;
    };
    return detail::adaptive_gl15(dividend, 0.0, tau_max, 1e-14);
}

// ---------------------------------------------------------------------------
// Sup-norm relative errors
// ---------------------------------------------------------------------------

/// max_i |approx_i - ref_i| / max_i |ref_i|. The denominator must exceed
/// 1e-8: comparing against an (almost) identically zero reference is a bug.
inline double sup_relative_error(const VectorXd& approx, const VectorXd& ref) {
    if (approx.size() != ref.size() || ref.size() == 0)
        throw std::invalid_argument("sup_relative_error: size mismatch or empty input");
    const double denom = ref.cwiseAbs().maxCoeff();
    if (denom <= 1e-8)
        throw std::invalid_argument("sup_relative_error: reference is numerically zero");
    return (approx - ref).cwiseAbs().maxCoeff() / denom;
}

/// Per-variable sup relative errors between two trajectories on one time grid.
struct PathErrors {
    VectorXd eps_x;      ///< length M
    VectorXd eps_mu;     ///< length M (empty when the reference lacks costates)
    VectorXd eps_y;      ///< length P
    double eps_x_max = 0.0;
    double eps_y_max = 0.0;
};

inline PathErrors compare_paths(const Trajectory& approx, const Trajectory& ref) {
    if (approx.times.size() != ref.times.size() || approx.times.empty())
        throw std::invalid_argument("compare_paths: trajectories must share a time grid");
    for (size_t i = 0; i < approx.times.size(); ++i)
        if (std::abs(approx.times[i] - ref.times[i]) > 1e-12 * std::max(1.0, ref.times[i]))
            throw std::invalid_argument("compare_paths: trajectories must share a time grid");
    const auto column = [](const std::vector<VectorXd>& path, int c) {
        VectorXd v(static_cast<Eigen::Index>(path.size()));
        for (size_t i = 0; i < path.size(); ++i) v(static_cast<Eigen::Index>(i)) = path[i](c);
        return v;
    };
    PathErrors pe;
    const int M = static_cast<int>(ref.x_path.front().size());
    const int P = static_cast<int>(ref.y_path.empty() ? 0 : ref.y_path.front().size());
    pe.eps_x = VectorXd(M);
    for (int m = 0; m < M; ++m)
        pe.eps_x(m) = sup_relative_error(column(approx.x_path, m), column(ref.x_path, m));
    if (!ref.mu_path.empty() && !approx.mu_path.empty()) {
        pe.eps_mu = VectorXd(M);
        for (int m = 0; m < M; ++m)
            pe.eps_mu(m) =
                sup_relative_error(column(approx.mu_path, m), column(ref.mu_path, m));
    }
    pe.eps_y = VectorXd(P);
    for (int p = 0; p < P; ++p)
        pe.eps_y(p) = sup_relative_error(column(approx.y_path, p), column(ref.y_path, p));
    pe.eps_x_max = M > 0 ? pe.eps_x.maxCoeff() : 0.0;
    pe.eps_y_max = P > 0 ? pe.eps_y.maxCoeff() : 0.0;
    return pe;
}

}  // namespace kpaths
