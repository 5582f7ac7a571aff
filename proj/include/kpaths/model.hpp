#pragma once

// DAE problem interface: semi-explicit index-1 systems
//
//   xdot  = F(x, mu, y)
//   mudot = r*mu - mu .* G(x, mu, y)
//   0     = H(x, mu, y),      x(0) = x0,
//
// with the transversality limit lim e^{-rt} x .* mu = 0 handled as a
// diagnostic, never as a constraint. Models expose analytic first
// derivatives of F, G, H; the solver and the implicit-function step of the
// IVP oracle both consume them (finite differences are a cross-check only).

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kpaths {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Value of one of the model maps together with its three partials.
struct MapJacobian {
    MatrixXd dx;   ///< d(map)/dx,  rows = map dim, cols = M
    MatrixXd dmu;  ///< d(map)/dmu, rows = map dim, cols = M
    MatrixXd dy;   ///< d(map)/dy,  rows = map dim, cols = P
};

using VectorMap = std::function<VectorXd(const VectorXd& x, const VectorXd& mu,
                                         const VectorXd& y)>;
using JacobianMap = std::function<MapJacobian(const VectorXd& x, const VectorXd& mu,
                                              const VectorXd& y)>;

/// A DAE instance: dimensions, discount rate, initial state, residual maps
/// and their analytic derivatives, plus optional bounds and penalty hints.
struct ModelSpec {
    std::string name;
    int state_dim = 0;          ///< M
    int jump_dim = 0;           ///< P
    double discount_rate = 0.0; ///< r > 0
    VectorXd initial_state;     ///< x0, length M

    VectorMap F, G, H;
    JacobianMap F_jac, G_jac, H_jac;

    /// Lower bounds on the fitted free initials (box projection in the
    /// solver); +-inf entries mean unbounded.
    VectorXd mu0_lower, mu0_upper;  ///< length M
    VectorXd y0_lower, y0_upper;    ///< length P

    /// Jump variables whose derivative norms join the objective with
    /// weight extra_penalty_weight (supplement's lambda_p device).
    std::vector<int> extra_penalty_vars;
    double extra_penalty_weight = 0.0;

    /// Human-readable per-variable names for reports (x, mu, y order).
    std::vector<std::string> state_names, costate_names, jump_names;

    void validate() const {
        if (state_dim < 1) throw std::invalid_argument(name + ": state_dim must be >= 1");
        if (jump_dim < 0) throw std::invalid_argument(name + ": jump_dim must be >= 0");
        if (!(discount_rate > 0.0))
            throw std::invalid_argument(name + ": discount_rate must be > 0");
        if (initial_state.size() != state_dim)
            throw std::invalid_argument(name + ": initial_state has wrong length");
        for (int p : extra_penalty_vars)
            if (p < 0 || p >= jump_dim)
                throw std::invalid_argument(name + ": extra penalty index out of range");
        auto check_box = [&](const VectorXd& lo, const VectorXd& hi, int dim,
                             const char* which) {
            if (lo.size() != dim || hi.size() != dim)
                throw std::invalid_argument(name + ": " + which +
                                            " bounds have wrong length");
            for (int i = 0; i < dim; ++i)
                if (!(lo(i) < hi(i)))
                    throw std::invalid_argument(name + ": " + which +
                                                " bounds must satisfy lower < upper");
        };
        check_box(mu0_lower, mu0_upper, state_dim, "mu0");
        check_box(y0_lower, y0_upper, jump_dim, "y0");
    }

    std::string variable_name(int idx) const {
        // Stacked order: states, co-states, jumps.
        if (idx < state_dim) return state_names[static_cast<size_t>(idx)];
        if (idx < 2 * state_dim)
            return costate_names[static_cast<size_t>(idx - state_dim)];
        return jump_names[static_cast<size_t>(idx - 2 * state_dim)];
    }
};

/// Stacked residual [xdot - F; mudot - r*mu + mu.*G; H]; zero iff the point
/// satisfies all three DAE equations.
inline VectorXd dae_residual(const ModelSpec& m, const VectorXd& x, const VectorXd& mu,
                             const VectorXd& y, const VectorXd& xdot,
                             const VectorXd& mudot) {
    if (x.size() != m.state_dim || mu.size() != m.state_dim || y.size() != m.jump_dim ||
        xdot.size() != m.state_dim || mudot.size() != m.state_dim)
        throw std::invalid_argument("dae_residual: dimension mismatch");
    VectorXd r(2 * m.state_dim + m.jump_dim);
    r.head(m.state_dim) = xdot - m.F(x, mu, y);
    r.segment(m.state_dim, m.state_dim) =
        mudot - m.discount_rate * mu + mu.cwiseProduct(m.G(x, mu, y));
    if (m.jump_dim > 0) r.tail(m.jump_dim) = m.H(x, mu, y);
    return r;
}

/// A time-indexed solution path (dense output of an oracle or a fit).
struct Trajectory {
    std::vector<double> times;
    std::vector<VectorXd> x_path, mu_path, y_path;
    std::vector<VectorXd> xdot_path, mudot_path;  ///< optional, may be empty
    bool truncated = false;  ///< integration stopped before the requested horizon

    size_t size() const { return times.size(); }
};

namespace detail {

inline VectorXd constant_vector(int n, double v) {
    return VectorXd::Constant(n, v);
}

inline double infinity() { return std::numeric_limits<double>::infinity(); }

}  // namespace detail

}  // namespace kpaths
