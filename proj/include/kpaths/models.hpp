#pragma once

// The five built-in models. Each factory validates its parameter domain and
// returns an immutable ModelSpec with analytic first derivatives.

#include "kpaths/model.hpp"

#include <cmath>

namespace kpaths {

/// Neoclassical growth: F = x^a - delta*x - y, G = a x^{a-1} - delta,
/// H = mu*y - 1. Baseline x0=1.0, delta=0.1, r=0.11, a=1/3.
inline ModelSpec make_neoclassical_growth(double x0 = 1.0, double delta = 0.1,
                                          double r = 0.11, double a = 1.0 / 3.0) {
    if (!(x0 > 0.0)) throw std::invalid_argument("growth: x0 must be > 0");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("growth: delta must be in (0,1)");
    if (!(r > 0.0)) throw std::invalid_argument("growth: r must be > 0");
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("growth: a must be in (0,1)");

    ModelSpec m;
    m.name = "neoclassical_growth";
    m.state_dim = 1;
    m.jump_dim = 1;
    m.discount_rate = r;
    m.initial_state = VectorXd::Constant(1, x0);
    m.state_names = {"x"};
    m.costate_names = {"mu"};
    m.jump_names = {"y"};

    m.F = [a, delta](const VectorXd& x, const VectorXd&, const VectorXd& y) {
        VectorXd out(1);
        out(0) = std::pow(x(0), a) - delta * x(0) - y(0);
        return out;
    };
    m.G = [a, delta](const VectorXd& x, const VectorXd&, const VectorXd&) {
        VectorXd out(1);
        out(0) = a * std::pow(x(0), a - 1.0) - delta;
        return out;
    };
    m.H = [](const VectorXd&, const VectorXd& mu, const VectorXd& y) {
        VectorXd out(1);
        out(0) = mu(0) * y(0) - 1.0;
        return out;
    };
    m.F_jac = [a, delta](const VectorXd& x, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, a * std::pow(x(0), a - 1.0) - delta);
        j.dmu = MatrixXd::Zero(1, 1);
        j.dy = MatrixXd::Constant(1, 1, -1.0);
        return j;
    };
    m.G_jac = [a](const VectorXd& x, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, a * (a - 1.0) * std::pow(x(0), a - 2.0));
        j.dmu = MatrixXd::Zero(1, 1);
        j.dy = MatrixXd::Zero(1, 1);
        return j;
    };
    m.H_jac = [](const VectorXd&, const VectorXd& mu, const VectorXd& y) {
        MapJacobian j;
        j.dx = MatrixXd::Zero(1, 1);
        j.dmu = MatrixXd::Constant(1, 1, y(0));
        j.dy = MatrixXd::Constant(1, 1, mu(0));
        return j;
    };

    // y0_hat > 0 per the baseline experiment's stated bound; mu0_hat > 0
    // keeps H = mu*y - 1 solvable from the default initialization.
    m.mu0_lower = VectorXd::Constant(1, 1e-8);
    m.mu0_upper = VectorXd::Constant(1, detail::infinity());
    m.y0_lower = VectorXd::Constant(1, 1e-8);
    m.y0_upper = VectorXd::Constant(1, detail::infinity());
    m.validate();
    return m;
}

/// Concave-convex (Skiba) growth: f(x) = A*max{x^a, b1*x^a - b2}, otherwise
/// the neoclassical structure. At the kink the lower branch derivative is
/// used (measure-zero tie-break).
inline ModelSpec make_skiba_growth(double x0 = 1.0, double delta = 0.1, double r = 0.11,
                                   double a = 1.0 / 3.0, double A = 0.5, double b1 = 3.0,
                                   double b2 = 2.5) {
    if (!(x0 > 0.0)) throw std::invalid_argument("skiba: x0 must be > 0");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("skiba: delta must be in (0,1)");
    if (!(r > 0.0)) throw std::invalid_argument("skiba: r must be > 0");
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("skiba: a must be in (0,1)");
    if (!(A > 0.0)) throw std::invalid_argument("skiba: A must be > 0");
    if (!(b1 > 1.0)) throw std::invalid_argument("skiba: b1 must be > 1");
    if (!(b2 > 0.0)) throw std::invalid_argument("skiba: b2 must be > 0");

    const double xbar = std::pow(b2 / (b1 - 1.0), 1.0 / a);  // branch crossover
    auto f = [=](double x) {
        return A * std::max(std::pow(x, a), b1 * std::pow(x, a) - b2);
    };
    auto fp = [=](double x) {
        const double base = A * a * std::pow(x, a - 1.0);
        return x <= xbar ? base : b1 * base;
    };
    auto fpp = [=](double x) {
        const double base = A * a * (a - 1.0) * std::pow(x, a - 2.0);
        return x <= xbar ? base : b1 * base;
    };

    ModelSpec m;
    m.name = "skiba_growth";
    m.state_dim = 1;
    m.jump_dim = 1;
    m.discount_rate = r;
    m.initial_state = VectorXd::Constant(1, x0);
    m.state_names = {"x"};
    m.costate_names = {"mu"};
    m.jump_names = {"y"};

    m.F = [f, delta](const VectorXd& x, const VectorXd&, const VectorXd& y) {
        VectorXd out(1);
        out(0) = f(x(0)) - delta * x(0) - y(0);
        return out;
    };
    m.G = [fp, delta](const VectorXd& x, const VectorXd&, const VectorXd&) {
        VectorXd out(1);
        out(0) = fp(x(0)) - delta;
        return out;
    };
    m.H = [](const VectorXd&, const VectorXd& mu, const VectorXd& y) {
        VectorXd out(1);
        out(0) = mu(0) * y(0) - 1.0;
        return out;
    };
    m.F_jac = [fp, delta](const VectorXd& x, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, fp(x(0)) - delta);
        j.dmu = MatrixXd::Zero(1, 1);
        j.dy = MatrixXd::Constant(1, 1, -1.0);
        return j;
    };
    m.G_jac = [fpp](const VectorXd& x, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, fpp(x(0)));
        j.dmu = MatrixXd::Zero(1, 1);
        j.dy = MatrixXd::Zero(1, 1);
        return j;
    };
    m.H_jac = [](const VectorXd&, const VectorXd& mu, const VectorXd& y) {
        MapJacobian j;
        j.dx = MatrixXd::Zero(1, 1);
        j.dmu = MatrixXd::Constant(1, 1, y(0));
        j.dy = MatrixXd::Constant(1, 1, mu(0));
        return j;
    };
    m.mu0_lower = VectorXd::Constant(1, 1e-8);
    m.mu0_upper = VectorXd::Constant(1, detail::infinity());
    m.y0_lower = VectorXd::Constant(1, 1e-8);
    m.y0_upper = VectorXd::Constant(1, detail::infinity());
    m.validate();
    return m;
}

/// Skiba branch crossover point (b2/(b1-1))^{1/a}; exposed for experiments.
inline double skiba_kink(double a = 1.0 / 3.0, double b1 = 3.0, double b2 = 2.5) {
    return std::pow(b2 / (b1 - 1.0), 1.0 / a);
}

/// Linear asset pricing: F = c + g*x, G = x/mu (so r*mu - mu*G = r*mu - x),
/// no jump variables. Baseline x0=1.0, c=0.02, g=-0.2, r=0.1.
inline ModelSpec make_asset_pricing(double x0 = 1.0, double c = 0.02, double g = -0.2,
                                    double r = 0.1) {
    if (!(r > 0.0)) throw std::invalid_argument("asset: r must be > 0");
    if (g == 0.0) throw std::invalid_argument("asset: g must be nonzero");
    // r > g keeps the discounted dividend integral (the fundamental price)
    // convergent.
    if (!(r > g)) throw std::invalid_argument("asset: r must exceed g");

    ModelSpec m;
    m.name = "asset_pricing";
    m.state_dim = 1;
    m.jump_dim = 0;
    m.discount_rate = r;
    m.initial_state = VectorXd::Constant(1, x0);
    m.state_names = {"x"};
    m.costate_names = {"mu"};
    m.jump_names = {};

    m.F = [c, g](const VectorXd& x, const VectorXd&, const VectorXd&) {
        VectorXd out(1);
        out(0) = c + g * x(0);
        return out;
    };
    m.G = [](const VectorXd& x, const VectorXd& mu, const VectorXd&) {
        VectorXd out(1);
        out(0) = x(0) / mu(0);  // mu = 0 yields a non-finite signal by design
        return out;
    };
    m.H = [](const VectorXd&, const VectorXd&, const VectorXd&) { return VectorXd(0); };
    m.F_jac = [g](const VectorXd&, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, g);
        j.dmu = MatrixXd::Zero(1, 1);
        j.dy = MatrixXd::Zero(1, 0);
        return j;
    };
    m.G_jac = [](const VectorXd& x, const VectorXd& mu, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, 1.0 / mu(0));
        j.dmu = MatrixXd::Constant(1, 1, -x(0) / (mu(0) * mu(0)));
        j.dy = MatrixXd::Zero(1, 0);
        return j;
    };
    m.H_jac = [](const VectorXd&, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Zero(0, 1);
        j.dmu = MatrixXd::Zero(0, 1);
        j.dy = MatrixXd::Zero(0, 0);
        return j;
    };
    m.mu0_lower = VectorXd::Constant(1, 1e-8);
    m.mu0_upper = VectorXd::Constant(1, detail::infinity());
    m.y0_lower = VectorXd(0);
    m.y0_upper = VectorXd(0);
    m.validate();
    return m;
}

/// Two-sector human capital model: states (x_k, x_h), co-states (mu_k, mu_h),
/// jumps (y_c, y_k, y_h), production f = x_k^{a_k} x_h^{a_h}.
///
///   F = [y_k - delta_k x_k;  y_h - delta_h x_h]
///   G = [a_k f/x_k - delta_k;  a_h f/x_h - delta_h]
///   H = [mu_k y_c - 1;  mu_k - mu_h;  f - y_c - y_k - y_h]
///
/// H2 does not involve y, so grad_y H is singular (effectively index-2);
/// the jump derivative norms are penalized with lambda_p to stabilize the
/// coupled fit, matching the source experiment.
inline ModelSpec make_human_capital(double x_k0 = 1.5, double x_h0 = 1.37,
                                    double delta_k = 0.1, double delta_h = 0.05,
                                    double a_k = 1.0 / 3.0, double a_h = 1.0 / 4.0,
                                    double r = 0.11, double lambda_p = 5e-3) {
    if (!(a_k > 0.0 && a_h > 0.0 && a_k + a_h < 1.0))
        throw std::invalid_argument("human_capital: need a_k, a_h > 0 and a_k + a_h < 1");
    if (!(delta_k > 0.0 && delta_k < 1.0) || !(delta_h > 0.0 && delta_h < 1.0))
        throw std::invalid_argument("human_capital: depreciation rates must be in (0,1)");
    if (!(r > 0.0)) throw std::invalid_argument("human_capital: r must be > 0");
    if (!(x_k0 > 0.0 && x_h0 > 0.0))
        throw std::invalid_argument("human_capital: initial stocks must be > 0");
    if (lambda_p < 0.0) throw std::invalid_argument("human_capital: lambda_p must be >= 0");

    auto f = [=](double xk, double xh) { return std::pow(xk, a_k) * std::pow(xh, a_h); };

    ModelSpec m;
    m.name = "human_capital";
    m.state_dim = 2;
    m.jump_dim = 3;
    m.discount_rate = r;
    m.initial_state = VectorXd(2);
    m.initial_state << x_k0, x_h0;
    m.state_names = {"x_k", "x_h"};
    m.costate_names = {"mu_k", "mu_h"};
    m.jump_names = {"y_c", "y_k", "y_h"};

    m.F = [delta_k, delta_h](const VectorXd& x, const VectorXd&, const VectorXd& y) {
        VectorXd out(2);
        out << y(1) - delta_k * x(0), y(2) - delta_h * x(1);
        return out;
    };
    m.G = [=](const VectorXd& x, const VectorXd&, const VectorXd&) {
        VectorXd out(2);
        const double prod = f(x(0), x(1));
        out << a_k * prod / x(0) - delta_k, a_h * prod / x(1) - delta_h;
        return out;
    };
    m.H = [=](const VectorXd& x, const VectorXd& mu, const VectorXd& y) {
        VectorXd out(3);
        out << mu(0) * y(0) - 1.0, mu(0) - mu(1), f(x(0), x(1)) - y(0) - y(1) - y(2);
        return out;
    };
    m.F_jac = [delta_k, delta_h](const VectorXd&, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Zero(2, 2);
        j.dx(0, 0) = -delta_k;
        j.dx(1, 1) = -delta_h;
        j.dmu = MatrixXd::Zero(2, 2);
        j.dy = MatrixXd::Zero(2, 3);
        j.dy(0, 1) = 1.0;
        j.dy(1, 2) = 1.0;
        return j;
    };
    m.G_jac = [=](const VectorXd& x, const VectorXd&, const VectorXd&) {
        MapJacobian j;
        const double prod = f(x(0), x(1));
        j.dx = MatrixXd(2, 2);
        j.dx(0, 0) = a_k * (a_k - 1.0) * prod / (x(0) * x(0));
        j.dx(0, 1) = a_k * a_h * prod / (x(0) * x(1));
        j.dx(1, 0) = a_h * a_k * prod / (x(0) * x(1));
        j.dx(1, 1) = a_h * (a_h - 1.0) * prod / (x(1) * x(1));
        j.dmu = MatrixXd::Zero(2, 2);
        j.dy = MatrixXd::Zero(2, 3);
        return j;
    };
    m.H_jac = [=](const VectorXd& x, const VectorXd& mu, const VectorXd& y) {
        MapJacobian j;
        const double prod = f(x(0), x(1));
        j.dx = MatrixXd::Zero(3, 2);
        j.dx(2, 0) = a_k * prod / x(0);
        j.dx(2, 1) = a_h * prod / x(1);
        j.dmu = MatrixXd::Zero(3, 2);
        j.dmu(0, 0) = y(0);
        j.dmu(1, 0) = 1.0;
        j.dmu(1, 1) = -1.0;
        j.dy = MatrixXd::Zero(3, 3);
        j.dy(0, 0) = mu(0);
        j.dy(2, 0) = -1.0;
        j.dy(2, 1) = -1.0;
        j.dy(2, 2) = -1.0;
        return j;
    };
    m.extra_penalty_vars = {0, 1, 2};
    m.extra_penalty_weight = lambda_p;
    m.mu0_lower = VectorXd::Constant(2, 1e-8);
    m.mu0_upper = VectorXd::Constant(2, detail::infinity());
    m.y0_lower = VectorXd::Constant(3, 1e-8);
    m.y0_upper = VectorXd::Constant(3, detail::infinity());
    m.validate();
    return m;
}

/// Human-capital stock consistent with x_k under no arbitrage: the net
/// returns on the two stocks are equalized,
///   a_k f/x_k - delta_k = a_h f/x_h - delta_h,  f = x_k^{a_k} x_h^{a_h}.
/// Solved by bisection; used to pick x_h(0) once x_k(0) is fixed.
inline double human_capital_noarb_xh(double x_k, double delta_k = 0.1,
                                     double delta_h = 0.05,
                                     double a_k = 1.0 / 3.0,
                                     double a_h = 1.0 / 4.0) {
    if (!(x_k > 0.0)) throw std::invalid_argument("human_capital_noarb_xh: x_k must be > 0");
    auto gap = [=](double x_h) {
        const double prod = std::pow(x_k, a_k) * std::pow(x_h, a_h);
        return (a_k * prod / x_k - delta_k) - (a_h * prod / x_h - delta_h);
    };
    // gap(x_h) is increasing from -inf (x_h -> 0 makes the x_h return blow
    // up); bracket the root by doubling and bisect to full precision.
    double lo = 1e-8, hi = std::max(1.0, x_k);
    while (gap(hi) <= 0.0) {
        hi *= 2.0;
        if (hi > 1e12)
            throw std::invalid_argument("human_capital_noarb_xh: no root below 1e12");
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) <= 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Optimal advertising: F = (1-x)y - beta*x, co-state in factored form with
/// G = gamma/mu - beta - y (gamma = (beta+r)/c), H = y^{(1-kappa)/kappa}
/// - kappa*mu*(1-x). G is singular at mu = 0; mu is bounded away from 0.
inline ModelSpec make_optimal_advertising(double x0 = 0.4, double r = 0.11,
                                          double c = 0.5, double beta = 0.05,
                                          double kappa = 0.5) {
    if (!(kappa > 0.0 && kappa < 1.0))
        throw std::invalid_argument("advertising: kappa must be in (0,1)");
    if (!(beta > 0.0)) throw std::invalid_argument("advertising: beta must be > 0");
    if (!(r > 0.0)) throw std::invalid_argument("advertising: r must be > 0");
    if (!(c > 0.0)) throw std::invalid_argument("advertising: c must be > 0");

    const double gamma = (beta + r) / c;
    const double e = (1.0 - kappa) / kappa;  // exponent in the shadow-price relation

    ModelSpec m;
    m.name = "optimal_advertising";
    m.state_dim = 1;
    m.jump_dim = 1;
    m.discount_rate = r;
    m.initial_state = VectorXd::Constant(1, x0);
    m.state_names = {"x"};
    m.costate_names = {"mu"};
    m.jump_names = {"y"};

    m.F = [beta](const VectorXd& x, const VectorXd&, const VectorXd& y) {
        VectorXd out(1);
        out(0) = (1.0 - x(0)) * y(0) - beta * x(0);
        return out;
    };
    m.G = [gamma, beta](const VectorXd&, const VectorXd& mu, const VectorXd& y) {
        VectorXd out(1);
        out(0) = gamma / mu(0) - beta - y(0);
        return out;
    };
    m.H = [e, kappa](const VectorXd& x, const VectorXd& mu, const VectorXd& y) {
        VectorXd out(1);
        out(0) = std::pow(y(0), e) - kappa * mu(0) * (1.0 - x(0));
        return out;
    };
    m.F_jac = [beta](const VectorXd& x, const VectorXd&, const VectorXd& y) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, -y(0) - beta);
        j.dmu = MatrixXd::Zero(1, 1);
        j.dy = MatrixXd::Constant(1, 1, 1.0 - x(0));
        return j;
    };
    m.G_jac = [gamma](const VectorXd&, const VectorXd& mu, const VectorXd&) {
        MapJacobian j;
        j.dx = MatrixXd::Zero(1, 1);
        j.dmu = MatrixXd::Constant(1, 1, -gamma / (mu(0) * mu(0)));
        j.dy = MatrixXd::Constant(1, 1, -1.0);
        return j;
    };
    m.H_jac = [e, kappa](const VectorXd& x, const VectorXd& mu, const VectorXd& y) {
        MapJacobian j;
        j.dx = MatrixXd::Constant(1, 1, kappa * mu(0));
        j.dmu = MatrixXd::Constant(1, 1, -kappa * (1.0 - x(0)));
        j.dy = MatrixXd::Constant(1, 1, e == 1.0 ? 1.0 : e * std::pow(y(0), e - 1.0));
        return j;
    };
    m.mu0_lower = VectorXd::Constant(1, 1e-6);  // keeps G finite
    m.mu0_upper = VectorXd::Constant(1, detail::infinity());
    m.y0_lower = VectorXd::Constant(1, 1e-8);
    m.y0_upper = VectorXd::Constant(1, detail::infinity());
    m.validate();
    return m;
}

/// gamma = (beta + r)/c for the advertising model; exposed for tests.
inline double advertising_gamma(double r = 0.11, double c = 0.5, double beta = 0.05) {
    return (beta + r) / c;
}

}  // namespace kpaths
