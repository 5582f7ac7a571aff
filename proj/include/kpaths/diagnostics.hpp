#pragma once

// Executable checks of the method's asymptotic claims: transversality decay,
// the divergence rate of non-solutions, consistency of the fit as the grid
// grows, and robustness across kernel choices.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "reference.hpp"
#include "solver.hpp"

namespace kpaths {

// ---------------------------------------------------------------------------
// Transversality
// ---------------------------------------------------------------------------

/// e^{-rt} x(t) .* mu(t) along a fitted path; the valid trajectory drives
/// every component to zero as t grows.
struct TransversalityReport {
    std::vector<double> times;    ///< 0 followed by log-spaced points up to horizon
    std::vector<VectorXd> values; ///< e^{-rt} x(t) .* mu(t), length M each
    VectorXd terminal;            ///< value at the horizon
    double terminal_max_abs = 0.0;
};

inline TransversalityReport transversality_residual(const KernelSolution& sol,
                                                    double horizon, int n_points = 50) {
    if (horizon < sol.grid.horizon())
        throw std::invalid_argument(
            "transversality_residual: horizon must cover the training grid");
    if (n_points < 2)
        throw std::invalid_argument("transversality_residual: n_points must be >= 2");
    TransversalityReport rep;
    rep.times.push_back(0.0);
    // Log-spaced over three decades ending at the horizon.
    const double lg_hi = std::log10(horizon);
    for (int i = 0; i < n_points - 1; ++i) {
        const double lg = lg_hi - 3.0 + 3.0 * i / (n_points - 2);
        rep.times.push_back(std::pow(10.0, lg));
    }
    const double r = sol.model.discount_rate;
    for (double t : rep.times) {
        const PathPoint p = sol.evaluate(t);
        rep.values.push_back(std::exp(-r * t) * p.x.cwiseProduct(p.mu));
    }
    rep.terminal = rep.values.back();
    rep.terminal_max_abs = rep.terminal.cwiseAbs().maxCoeff();
    return rep;
}

// ---------------------------------------------------------------------------
// Divergence rate
// ---------------------------------------------------------------------------

/// Logarithmic growth rate mudot/mu per costate component along a trajectory.
/// Components are NaN from the first time their costate crosses zero onward
/// (the ratio is undefined there). The tail rate averages the last 20% of the
/// time window over defined entries.
struct DivergenceReport {
    std::vector<double> times;
    std::vector<VectorXd> rates;  ///< mudot ./ mu, length M each
    VectorXd tail_rate;           ///< per component; NaN if undefined throughout the tail
    bool tail_exceeds_discount = false;  ///< any component's tail rate > r
};

inline DivergenceReport divergence_rate(const ModelSpec& model, const Trajectory& tr) {
    if (tr.times.empty() || tr.mu_path.empty())
        throw std::invalid_argument("divergence_rate: trajectory must carry costates");
    const int M = model.state_dim;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    DivergenceReport rep;
    rep.times = tr.times;
    std::vector<bool> crossed(static_cast<size_t>(M), false);
    for (size_t i = 0; i < tr.times.size(); ++i) {
        const VectorXd& mu = tr.mu_path[i];
        // Prefer the recorded mudot; otherwise recompute from the costate law.
        VectorXd mudot;
        if (i < tr.mudot_path.size() && tr.mudot_path[i].size() == M) {
            mudot = tr.mudot_path[i];
        } else {
            const VectorXd& x = tr.x_path[i];
            const VectorXd y = tr.y_path.empty() ? VectorXd(0) : tr.y_path[i];
            mudot = model.discount_rate * mu - mu.cwiseProduct(model.G(x, mu, y));
        }
        VectorXd rate(M);
        for (int m = 0; m < M; ++m) {
            if (!crossed[static_cast<size_t>(m)] &&
                (std::abs(mu(m)) < 1e-12 || !std::isfinite(mu(m)) ||
                 (i > 0 && mu(m) * tr.mu_path[i - 1](m) < 0.0)))
                crossed[static_cast<size_t>(m)] = true;
            rate(m) = crossed[static_cast<size_t>(m)] ? nan : mudot(m) / mu(m);
        }
        rep.rates.push_back(rate);
    }
    // Mean over the last 20% of the window, skipping undefined entries.
    const double t_last = tr.times.back();
    const double t_cut = t_last - 0.2 * (t_last - tr.times.front());
    rep.tail_rate = detail::constant_vector(M, nan);
    for (int m = 0; m < M; ++m) {
        double acc = 0.0;
        int cnt = 0;
        for (size_t i = 0; i < rep.times.size(); ++i) {
            if (rep.times[i] < t_cut) continue;
            const double v = rep.rates[i](m);
            if (std::isfinite(v)) {
                acc += v;
                ++cnt;
            }
        }
        if (cnt > 0) rep.tail_rate(m) = acc / cnt;
        if (cnt > 0 && rep.tail_rate(m) > model.discount_rate)
            rep.tail_exceeds_discount = true;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One fitted configuration inside a sweep.
struct SweepCell {
    double nu = 0.0, ell = 0.0;
    int N = 0;
    std::optional<unsigned> seed;    ///< set for uniform-iid grids
    std::string grid_kind;           ///< equispaced | uniform-iid | explicit
    std::string status;
    bool converged = false;
    double eps_x = std::numeric_limits<double>::quiet_NaN();  ///< max over states
    double eps_y = std::numeric_limits<double>::quiet_NaN();  ///< max over jumps
    double norm_sq = std::numeric_limits<double>::quiet_NaN();
    double mean_sq_residual = std::numeric_limits<double>::quiet_NaN();
    double runtime_seconds = 0.0;
};

struct SweepReport {
    std::vector<SweepCell> cells;
};

/// N points drawn uniformly i.i.d. on [0, horizon] (sorted). The seed fixes
/// the draw; ties are nudged apart so the grid stays strictly increasing.
inline TrainingGrid uniform_iid_grid(double horizon, int n, unsigned seed) {
    if (!(horizon > 0.0)) throw std::invalid_argument("uniform_iid_grid: horizon must be > 0");
    if (n < 2) throw std::invalid_argument("uniform_iid_grid: need at least 2 points");
    std::mt19937_64 rng(seed);
    std::vector<double> pts(static_cast<size_t>(n));
    for (double& p : pts)
        p = static_cast<double>(rng() >> 11) * 0x1.0p-53 * horizon;
    std::sort(pts.begin(), pts.end());
    for (size_t i = 1; i < pts.size(); ++i)
        if (pts[i] <= pts[i - 1])
            pts[i] = std::nextafter(pts[i - 1], std::numeric_limits<double>::infinity());
    TrainingGrid grid{pts};
    grid.validate();
    return grid;
}

namespace detail {

/// Fit one cell and measure errors against an optional reference trajectory
/// (compared at the reference's own times). Failures are recorded, not thrown.
inline SweepCell run_sweep_cell(const ModelSpec& model, const KernelSpec& kernel,
                                const TrainingGrid& grid, const SolverConfig& config,
                                const Trajectory* reference) {
    SweepCell cell;
    cell.nu = kernel.nu;
    cell.ell = kernel.ell;
    cell.N = grid.size();
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const KernelSolution sol = solve_model(model, kernel, grid, config);
        cell.status = sol.status;
        cell.converged = sol.converged;
        cell.norm_sq = sol.norm_sq_total;
        cell.mean_sq_residual = sol.mean_sq_residual;
        if (reference != nullptr) {
            const PathErrors pe = compare_paths(sol.sample(reference->times), *reference);
            cell.eps_x = pe.eps_x_max;
            if (model.jump_dim > 0) cell.eps_y = pe.eps_y_max;
        }
    } catch (const std::exception& e) {
        cell.status = std::string("failed: ") + e.what();
        cell.converged = false;
    }
    cell.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return cell;
}

}  // namespace detail

/// Fit the model once per grid size and record norms and errors. Sampling is
/// either "equispaced" or "uniform-iid" (seeded); cells that fail to converge
/// are recorded with their status rather than aborting the sweep.
inline SweepReport consistency_sweep(const ModelSpec& model, const KernelSpec& kernel,
                                     const SolverConfig& config,
                                     const std::vector<int>& n_list,
                                     const std::string& sampling, unsigned seed,
                                     double horizon, const Trajectory* reference = nullptr) {
    if (n_list.empty()) throw std::invalid_argument("consistency_sweep: n_list is empty");
    for (size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] < n_list[i - 1])
            throw std::invalid_argument("consistency_sweep: n_list must be non-decreasing");
    if (sampling != "equispaced" && sampling != "uniform-iid")
        throw std::invalid_argument(
            "consistency_sweep: sampling must be 'equispaced' or 'uniform-iid'");
    SweepReport report;
    for (int n : n_list) {
        const TrainingGrid grid = sampling == "equispaced"
                                      ? TrainingGrid::equispaced(horizon, n)
                                      : uniform_iid_grid(horizon, n, seed);
        SweepCell cell = detail::run_sweep_cell(model, kernel, grid, config, reference);
        cell.grid_kind = sampling;
        if (sampling == "uniform-iid") cell.seed = seed;
        report.cells.push_back(std::move(cell));
    }
    return report;
}

/// Fit the model once per (nu, ell) pair on a fixed grid.
inline SweepReport robustness_sweep(const ModelSpec& model,
                                    const std::vector<KernelSpec>& kernels,
                                    const SolverConfig& config, const TrainingGrid& grid,
                                    const Trajectory* reference = nullptr) {
    if (kernels.empty()) throw std::invalid_argument("robustness_sweep: kernel list is empty");
    SweepReport report;
    for (const KernelSpec& k : kernels) {
        SweepCell cell = detail::run_sweep_cell(model, k, grid, config, reference);
        cell.grid_kind = "explicit";
        report.cells.push_back(std::move(cell));
    }
    return report;
}

}  // namespace kpaths
