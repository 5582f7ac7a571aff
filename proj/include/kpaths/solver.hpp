#pragma once

// Kernel-collocation solver. Every derivative (xdot, mudot, ydot) is an
// expansion sum_j alpha_j k(t, t_j) over the training grid; levels follow by
// integrating the kernel, with x(0) pinned to the model's initial state and
// free intercepts mu0_hat, y0_hat. The DAE is enforced at the grid points and
// the coefficients are selected by damped Gauss-Newton with ridge rows
// sqrt(w) * L' alpha (L L' = K + jitter I), so the minimised penalty is
// exactly w * alpha' K alpha, the squared RKHS norm of each derivative.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "kernels.hpp"
#include "levmar.hpp"
#include "model.hpp"

namespace kpaths {

struct SolverConfig {
    double ridge_lambda = 1e-6;  ///< weight on the xdot / mudot norm rows
    /// Additional weight on the jump-derivative norms of the model's
    /// extra_penalty_vars, added on top of the model's own recommendation.
    double extra_penalty_weight = 0.0;
    /// When set, every jump derivative also gets a ridge_lambda norm row.
    bool penalize_jump_derivatives = false;
    double residual_tolerance = 1e-10;  ///< on mean-squared DAE residual
    double step_tolerance = 1e-12;
    int max_iterations = 200;
    /// Scale of a reproducible random perturbation applied to the initial
    /// coefficients; 0 starts from the exact minimum-norm point.
    double initial_coefficient_scale = 0.0;
    std::optional<VectorXd> initial_mu0;  ///< default: ones clamped to bounds
    std::optional<VectorXd> initial_y0;   ///< default: Newton solve of H = 0

    void validate() const {
        if (ridge_lambda < 0.0) throw config_error("solver: ridge_lambda must be >= 0");
        if (extra_penalty_weight < 0.0)
            throw config_error("solver: extra_penalty_weight must be >= 0");
        if (!(residual_tolerance > 0.0))
            throw config_error("solver: residual_tolerance must be > 0");
        if (!(step_tolerance > 0.0)) throw config_error("solver: step_tolerance must be > 0");
        if (max_iterations < 1) throw config_error("solver: max_iterations must be >= 1");
        if (initial_coefficient_scale < 0.0)
            throw config_error("solver: initial_coefficient_scale must be >= 0");
    }
};

/// State, costate and jump values (and the fitted derivatives) at one time.
struct PathPoint {
    VectorXd x, mu, y;
    VectorXd xdot, mudot;
};

/// A fitted kernel expansion together with everything needed to evaluate it.
struct KernelSolution {
    ModelSpec model;
    KernelSpec kernel;
    TrainingGrid grid;

    MatrixXd alpha_x;   ///< N x M derivative coefficients for the states
    MatrixXd alpha_mu;  ///< N x M for the costates
    MatrixXd alpha_y;   ///< N x P for the jumps
    VectorXd mu0, y0;   ///< fitted intercepts

    std::string status;  ///< optimizer outcome (see LevMarResult)
    bool converged = false;
    int iterations = 0;
    double mean_sq_residual = 0.0;  ///< mean-squared DAE residual at the fit
    double objective = 0.0;         ///< squared norm of the full residual stack

    VectorXd norm_sq_x;   ///< alpha' K alpha per state derivative
    VectorXd norm_sq_mu;  ///< per costate derivative
    VectorXd norm_sq_y;   ///< per jump derivative
    /// The minimised quantity: total squared RKHS norm of the state and
    /// costate derivatives.
    double norm_sq_total = 0.0;

    /// Evaluate the fitted path at any time >= 0; t = 0 reproduces the
    /// model's initial state exactly. Extrapolation beyond the grid horizon
    /// is permitted (the expansion decays toward the fitted intercepts).
    PathPoint evaluate(double t) const {
        if (t < 0.0) throw std::domain_error("KernelSolution::evaluate: t must be >= 0");
        const VectorXd q = integrated_kernel_row(kernel, t, grid);
        VectorXd k(grid.size());
        for (int j = 0; j < grid.size(); ++j)
            k(j) = kernel_eval(kernel, t, grid.points[static_cast<size_t>(j)]);
        PathPoint p;
        p.x = model.initial_state + alpha_x.transpose() * q;
        p.xdot = alpha_x.transpose() * k;
        p.mu = mu0 + alpha_mu.transpose() * q;
        p.mudot = alpha_mu.transpose() * k;
        p.y = y0 + alpha_y.transpose() * q;
        return p;
    }

    /// Sample the fitted path on a set of times (each >= 0).
    Trajectory sample(const std::vector<double>& times) const {
        Trajectory tr;
        tr.times = times;
        for (double t : times) {
            PathPoint p = evaluate(t);
            tr.x_path.push_back(p.x);
            tr.mu_path.push_back(p.mu);
            tr.y_path.push_back(p.y);
            tr.xdot_path.push_back(p.xdot);
            tr.mudot_path.push_back(p.mudot);
        }
        return tr;
    }
};

/// Residual/Jacobian assembly for one (model, kernel, grid, config) tuple.
/// Exposed separately from solve() so tests can probe the stack directly.
class KernelProblem {
public:
    KernelProblem(ModelSpec model, KernelSpec kernel, TrainingGrid grid, SolverConfig config)
        : model_(std::move(model)),
          kernel_(kernel),
          grid_(std::move(grid)),
          config_(config) {
        model_.validate();
        kernel_.validate();
        grid_.validate();
        config_.validate();
        N_ = grid_.size();
        M_ = model_.state_dim;
        P_ = model_.jump_dim;
        K_ = gram_matrix(kernel_, grid_);
        Q_ = integrated_kernel_matrix(kernel_, grid_.points, grid_);
        L_ = cholesky_with_jitter(K_, kernel_.sigma);

        // Effective norm weight per jump derivative.
        jump_weight_.assign(static_cast<size_t>(P_), 0.0);
        if (config_.penalize_jump_derivatives)
            for (int p = 0; p < P_; ++p) jump_weight_[static_cast<size_t>(p)] += config_.ridge_lambda;
        const double extra = model_.extra_penalty_weight + config_.extra_penalty_weight;
        for (int p : model_.extra_penalty_vars) jump_weight_[static_cast<size_t>(p)] += extra;

        n_dae_ = N_ * (2 * M_ + P_);
        n_ridge_ = 0;
        if (config_.ridge_lambda > 0.0) n_ridge_ += 2 * M_ * N_;
        for (double w : jump_weight_)
            if (w > 0.0) n_ridge_ += N_;
        n_params_ = N_ * (2 * M_ + P_) + M_ + P_;
    }

    int parameter_count() const { return n_params_; }
    int dae_row_count() const { return n_dae_; }
    int row_count() const { return n_dae_ + n_ridge_; }

    /// Parameter layout: [alpha_x (M blocks of N), alpha_mu (M blocks of N),
    /// alpha_y (P blocks of N), mu0 (M), y0 (P)].
    int offset_alpha_x(int m) const { return m * N_; }
    int offset_alpha_mu(int m) const { return (M_ + m) * N_; }
    int offset_alpha_y(int p) const { return (2 * M_ + p) * N_; }
    int offset_mu0() const { return (2 * M_ + P_) * N_; }
    int offset_y0() const { return offset_mu0() + M_; }

    VectorXd lower_bounds() const {
        VectorXd lo = detail::constant_vector(n_params_, -detail::infinity());
        lo.segment(offset_mu0(), M_) = model_.mu0_lower;
        if (P_ > 0) lo.segment(offset_y0(), P_) = model_.y0_lower;
        return lo;
    }

    VectorXd upper_bounds() const {
        VectorXd hi = detail::constant_vector(n_params_, detail::infinity());
        hi.segment(offset_mu0(), M_) = model_.mu0_upper;
        if (P_ > 0) hi.segment(offset_y0(), P_) = model_.y0_upper;
        return hi;
    }

    /// Default start: zero coefficients (a scaled reproducible perturbation
    /// if requested), mu0 = ones and y0 from a damped Newton solve of
    /// H(x0, mu0, y) = 0 -- both overridable through the config.
    VectorXd initial_point() const {
        VectorXd theta = VectorXd::Zero(n_params_);
        if (config_.initial_coefficient_scale > 0.0) {
            std::mt19937_64 rng(12345);
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int i = 0; i < N_ * (2 * M_ + P_); ++i)
                theta(i) = config_.initial_coefficient_scale * gauss(rng);
        }
        VectorXd mu0 = config_.initial_mu0 ? *config_.initial_mu0
                                           : detail::constant_vector(M_, 1.0);
        if (mu0.size() != M_)
            throw config_error("solver: initial_mu0 must have length " + std::to_string(M_));
        mu0 = mu0.cwiseMax(model_.mu0_lower).cwiseMin(model_.mu0_upper);
        theta.segment(offset_mu0(), M_) = mu0;
        if (P_ > 0) {
            VectorXd y0 = config_.initial_y0 ? *config_.initial_y0 : default_jump_init(mu0);
            if (y0.size() != P_)
                throw config_error("solver: initial_y0 must have length " + std::to_string(P_));
            y0 = y0.cwiseMax(model_.y0_lower).cwiseMin(model_.y0_upper);
            theta.segment(offset_y0(), P_) = y0;
        }
        return theta;
    }

    /// Full residual stack: N * (2M + P) DAE rows (grouped per grid point as
    /// [state eqs, costate eqs, algebraic eqs]) followed by the norm rows.
    ResidualEval residuals(const VectorXd& theta, bool want_jacobian) const {
        if (theta.size() != n_params_)
            throw std::invalid_argument("KernelProblem::residuals: theta has wrong length");
        const MatrixXd Ax = unpack(theta, 0);
        const MatrixXd Amu = unpack(theta, M_);
        const MatrixXd Ay = unpack_jump(theta);
        const VectorXd mu0 = theta.segment(offset_mu0(), M_);
        const VectorXd y0 = P_ > 0 ? VectorXd(theta.segment(offset_y0(), P_)) : VectorXd(0);

        const MatrixXd Xdot = K_ * Ax;
        const MatrixXd Mudot = K_ * Amu;
        MatrixXd X = Q_ * Ax;
        X.rowwise() += model_.initial_state.transpose();
        MatrixXd Mu = Q_ * Amu;
        Mu.rowwise() += mu0.transpose();
        MatrixXd Y(N_, P_);
        if (P_ > 0) {
            Y = Q_ * Ay;
            Y.rowwise() += y0.transpose();
        }

        ResidualEval ev;
        ev.r = VectorXd::Zero(row_count());
        if (want_jacobian) ev.J = MatrixXd::Zero(row_count(), n_params_);
        const double r_disc = model_.discount_rate;
        const int block = 2 * M_ + P_;

        for (int i = 0; i < N_; ++i) {
            const VectorXd xi = X.row(i).transpose(), mui = Mu.row(i).transpose();
            const VectorXd yi = P_ > 0 ? VectorXd(Y.row(i).transpose()) : VectorXd(0);
            const VectorXd Fi = model_.F(xi, mui, yi);
            const VectorXd Gi = model_.G(xi, mui, yi);
            const int base = i * block;

            for (int m = 0; m < M_; ++m) {
                ev.r(base + m) = Xdot(i, m) - Fi(m);
                ev.r(base + M_ + m) =
                    Mudot(i, m) - r_disc * mui(m) + mui(m) * Gi(m);
            }
            if (P_ > 0) {
                const VectorXd Hi = model_.H(xi, mui, yi);
                for (int p = 0; p < P_; ++p) ev.r(base + 2 * M_ + p) = Hi(p);
            }
            if (!want_jacobian) continue;

            const auto qrow = Q_.row(i);
            const auto krow = K_.row(i);
            const MapJacobian Fd = model_.F_jac(xi, mui, yi);
            const MapJacobian Gd = model_.G_jac(xi, mui, yi);

            for (int m = 0; m < M_; ++m) {
                auto frow = ev.J.row(base + m);
                auto crow = ev.J.row(base + M_ + m);
                // d/dx_m' of the costate equation: mu_m * dG_m/dx_m'.
                for (int mp = 0; mp < M_; ++mp) {
                    frow.segment(offset_alpha_x(mp), N_) = -Fd.dx(m, mp) * qrow;
                    frow.segment(offset_alpha_mu(mp), N_) = -Fd.dmu(m, mp) * qrow;
                    frow(offset_mu0() + mp) = -Fd.dmu(m, mp);
                    crow.segment(offset_alpha_x(mp), N_) = mui(m) * Gd.dx(m, mp) * qrow;
                    const double cmu = (mp == m ? Gi(m) - r_disc : 0.0) +
                                       mui(m) * Gd.dmu(m, mp);
                    crow.segment(offset_alpha_mu(mp), N_) = cmu * qrow;
                    crow(offset_mu0() + mp) = cmu;
                }
                frow.segment(offset_alpha_x(m), N_) += krow;
                crow.segment(offset_alpha_mu(m), N_) += krow;
                for (int p = 0; p < P_; ++p) {
                    frow.segment(offset_alpha_y(p), N_) = -Fd.dy(m, p) * qrow;
                    frow(offset_y0() + p) = -Fd.dy(m, p);
                    crow.segment(offset_alpha_y(p), N_) = mui(m) * Gd.dy(m, p) * qrow;
                    crow(offset_y0() + p) = mui(m) * Gd.dy(m, p);
                }
            }
            if (P_ > 0) {
                const MapJacobian Hd = model_.H_jac(xi, mui, yi);
                for (int p = 0; p < P_; ++p) {
                    auto hrow = ev.J.row(base + 2 * M_ + p);
                    for (int mp = 0; mp < M_; ++mp) {
                        hrow.segment(offset_alpha_x(mp), N_) = Hd.dx(p, mp) * qrow;
                        hrow.segment(offset_alpha_mu(mp), N_) = Hd.dmu(p, mp) * qrow;
                        hrow(offset_mu0() + mp) = Hd.dmu(p, mp);
                    }
                    for (int pp = 0; pp < P_; ++pp) {
                        hrow.segment(offset_alpha_y(pp), N_) = Hd.dy(p, pp) * qrow;
                        hrow(offset_y0() + pp) = Hd.dy(p, pp);
                    }
                }
            }
        }

        // Norm rows: sqrt(w) L' alpha per penalized derivative block, so the
        // added squared-norm contribution is w * alpha' K alpha (up to jitter).
        int row = n_dae_;
        const MatrixXd Lt = L_.transpose();
        auto add_block = [&](int col0, const VectorXd& a, double w) {
            const double sw = std::sqrt(w);
            ev.r.segment(row, N_) = sw * (Lt * a);
            if (want_jacobian) ev.J.block(row, col0, N_, N_) = sw * Lt;
            row += N_;
        };
        if (config_.ridge_lambda > 0.0) {
            for (int m = 0; m < M_; ++m)
                add_block(offset_alpha_x(m), Ax.col(m), config_.ridge_lambda);
            for (int m = 0; m < M_; ++m)
                add_block(offset_alpha_mu(m), Amu.col(m), config_.ridge_lambda);
        }
        for (int p = 0; p < P_; ++p)
            if (jump_weight_[static_cast<size_t>(p)] > 0.0)
                add_block(offset_alpha_y(p), Ay.col(p), jump_weight_[static_cast<size_t>(p)]);
        return ev;
    }

    /// Squared norm of the full residual stack (DAE + norm rows).
    double objective(const VectorXd& theta) const { return residuals(theta, false).r.squaredNorm(); }

    KernelSolution solve() const {
        if (config_.ridge_lambda == 0.0) reject_if_singular();
        const auto eval = [this](const VectorXd& th, bool wj) { return residuals(th, wj); };
        LevMarOptions opt;
        opt.residual_tolerance = config_.residual_tolerance;
        opt.step_tolerance = config_.step_tolerance;
        opt.max_iterations = config_.max_iterations;
        LevMarResult res =
            solve_least_squares(eval, initial_point(), lower_bounds(), upper_bounds(),
                                n_dae_, opt);

        KernelSolution sol;
        sol.model = model_;
        sol.kernel = kernel_;
        sol.grid = grid_;
        sol.alpha_x = unpack(res.theta, 0);
        sol.alpha_mu = unpack(res.theta, M_);
        sol.alpha_y = unpack_jump(res.theta);
        sol.mu0 = res.theta.segment(offset_mu0(), M_);
        sol.y0 = P_ > 0 ? VectorXd(res.theta.segment(offset_y0(), P_)) : VectorXd(0);
        sol.status = res.status;
        sol.converged = res.converged;
        sol.iterations = res.iterations;
        sol.mean_sq_residual = res.mean_sq_dae_residual;
        sol.objective = res.objective;
        sol.norm_sq_x = VectorXd(M_);
        sol.norm_sq_mu = VectorXd(M_);
        sol.norm_sq_y = VectorXd(P_);
        for (int m = 0; m < M_; ++m) {
            sol.norm_sq_x(m) = rkhs_norm_sq(K_, sol.alpha_x.col(m));
            sol.norm_sq_mu(m) = rkhs_norm_sq(K_, sol.alpha_mu.col(m));
        }
        for (int p = 0; p < P_; ++p) sol.norm_sq_y(p) = rkhs_norm_sq(K_, sol.alpha_y.col(p));
        sol.norm_sq_total = sol.norm_sq_x.sum() + sol.norm_sq_mu.sum();
        return sol;
    }

private:
    MatrixXd unpack(const VectorXd& theta, int first_block) const {
        MatrixXd A(N_, M_);
        for (int m = 0; m < M_; ++m)
            A.col(m) = theta.segment((first_block + m) * N_, N_);
        return A;
    }

    MatrixXd unpack_jump(const VectorXd& theta) const {
        MatrixXd A(N_, P_);
        for (int p = 0; p < P_; ++p) A.col(p) = theta.segment(offset_alpha_y(p), N_);
        return A;
    }

    VectorXd default_jump_init(const VectorXd& mu0) const {
        VectorXd y = detail::constant_vector(P_, 1.0)
                         .cwiseMax(model_.y0_lower)
                         .cwiseMin(model_.y0_upper);
        const VectorXd& x0 = model_.initial_state;
        VectorXd h = model_.H(x0, mu0, y);
        if (!h.allFinite()) return y;
        for (int it = 0; it < 50 && h.lpNorm<Eigen::Infinity>() > 1e-12; ++it) {
            const MapJacobian Hd = model_.H_jac(x0, mu0, y);
            Eigen::FullPivLU<MatrixXd> lu(Hd.dy);
            if (!lu.isInvertible()) return y;  // singular dH/dy: keep the flat start
            const VectorXd delta = lu.solve(-h);
            double step = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 30; ++ls) {
                VectorXd y_new = (y + step * delta)
                                     .cwiseMax(model_.y0_lower)
                                     .cwiseMin(model_.y0_upper);
                VectorXd h_new = model_.H(x0, mu0, y_new);
                if (h_new.allFinite() && h_new.norm() < h.norm()) {
                    y = y_new;
                    h = h_new;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
        return y;
    }

    /// With ridge_lambda = 0 the jump-coefficient blocks generically carry an
    /// exact null direction (the levels only see integrated coefficients), so
    /// an unpenalized fit is ill-posed unless every block is pinned some
    /// other way. Detect this by a rank test at the initial point.
    void reject_if_singular() const {
        const ResidualEval ev = residuals(initial_point(), true);
        Eigen::ColPivHouseholderQR<MatrixXd> qr(ev.J);
        if (qr.rank() < n_params_) {
            std::ostringstream msg;
            msg << "solver: ridge_lambda = 0 leaves the Gauss-Newton system singular "
                << "(rank " << qr.rank() << " of " << n_params_
                << " parameters); enable a norm penalty";
            throw config_error(msg.str());
        }
    }

    ModelSpec model_;
    KernelSpec kernel_;
    TrainingGrid grid_;
    SolverConfig config_;
    int N_ = 0, M_ = 0, P_ = 0;
    int n_dae_ = 0, n_ridge_ = 0, n_params_ = 0;
    MatrixXd K_, Q_, L_;
    std::vector<double> jump_weight_;
};

/// One-call convenience wrapper.
inline KernelSolution solve_model(const ModelSpec& model, const KernelSpec& kernel,
                                  const TrainingGrid& grid, const SolverConfig& config = {}) {
    return KernelProblem(model, kernel, grid, config).solve();
}

}  // namespace kpaths
