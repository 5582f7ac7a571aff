#pragma once

// Experiment runner: one config in, CSV files + manifest out. The five kinds
// share the same output contract: solution.csv (dense fitted path over
// [0, 1.5T]), errors.csv (when a reference oracle exists for the model),
// report.csv (for sweep kinds), manifest.json (the fully resolved config).

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "csv.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "reference.hpp"
#include "solver.hpp"

namespace kpaths {

struct RunOverrides {
    std::optional<std::string> output_dir;
    std::optional<unsigned long> seed;
    bool quiet = false;
};

struct RunResult {
    std::filesystem::path output_dir;
    std::string status;
    bool converged = false;
};

inline std::vector<double> linspace(double a, double b, int n) {
    if (n < 2) throw std::invalid_argument("linspace: need at least 2 points");
    std::vector<double> v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<size_t>(i)] = a + (b - a) * i / (n - 1);
    return v;
}

namespace detail {

/// The steady state the initial condition flows to: the only root when there
/// is one; otherwise side membership relative to the basin split (the
/// production kink for the Skiba model, the midpoint of the outer roots as a
/// fallback).
inline const SteadyState& select_target_steady_state(const ExperimentConfig& cfg,
                                                     const ModelSpec& model,
                                                     const std::vector<SteadyState>& sss) {
    if (sss.size() == 1) return sss.front();
    const double x0 = model.initial_state(0);
    const double split =
        cfg.model_name == "skiba"
            ? skiba_kink(cfg.resolved["model"]["params"]["a"].get<double>(),
                         cfg.resolved["model"]["params"]["b1"].get<double>(),
                         cfg.resolved["model"]["params"]["b2"].get<double>())
            : 0.5 * (sss.front().x(0) + sss.back().x(0));
    return x0 < split ? sss.front() : sss.back();
}

/// Reference trajectory at the sample times, or nothing when the model has
/// no independent oracle. Growth-family models use shooting toward the
/// steady state on the initial condition's side; the linear asset model uses
/// its closed-form dividend and fundamental-price paths.
inline std::optional<Trajectory> oracle_trajectory(const ExperimentConfig& cfg,
                                                   const ModelSpec& model,
                                                   const std::vector<double>& times) {
    const double horizon = times.back();
    if (cfg.model_name == "neoclassical-growth" || cfg.model_name == "skiba") {
        const std::vector<SteadyState> sss = find_steady_states(model);
        if (sss.empty()) return std::nullopt;
        const SteadyState* target = &select_target_steady_state(cfg, model, sss);
        // Expanding bracket around the steady-state costate.
        const double mu_star = target->mu(0);
        double lo = 0.8 * mu_star, hi = 1.25 * mu_star;
        for (int attempt = 0; attempt < 12; ++attempt) {
            try {
                ShootingResult sr =
                    shooting_solve(model, horizon, target->x,
                                   kpaths::detail::constant_vector(1, lo),
                                   kpaths::detail::constant_vector(1, hi), times);
                if (sr.converged) return sr.path;
                return std::nullopt;
            } catch (const std::invalid_argument&) {
                lo *= 0.5;
                hi *= 2.0;
            }
        }
        return std::nullopt;
    }
    if (cfg.model_name == "asset-pricing") {
        const double x0 = cfg.resolved["model"]["params"]["x0"].get<double>();
        const double c = cfg.resolved["model"]["params"]["c"].get<double>();
        const double g = cfg.resolved["model"]["params"]["g"].get<double>();
        const double r = cfg.resolved["model"]["params"]["r"].get<double>();
        Trajectory tr;
        tr.times = times;
        for (double t : times) {
            const double xt = (x0 + c / g) * std::exp(g * t) - c / g;
            tr.x_path.push_back(kpaths::detail::constant_vector(1, xt));
            tr.mu_path.push_back(
                kpaths::detail::constant_vector(1, asset_fundamental_price(x0, c, g, r, t)));
            tr.y_path.push_back(VectorXd(0));
        }
        return tr;
    }
    return std::nullopt;
}

inline std::string sanitize_filename(const std::string& s) {
    std::string out;
    for (char c : s)
        out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
    return out;
}

inline void note(const RunOverrides& ov, const std::string& msg) {
    if (!ov.quiet) std::cout << msg << "\n";
}

}  // namespace detail

/// Re-derive per-variable plot data from the CSV files in `dir`: one
/// gnuplot-ready two-column file per variable from solution.csv, and one per
/// error series when errors.csv is present. The header comment carries the
/// training-horizon marker (solution.csv spans [0, 1.5T] by contract, so
/// T = max t / 1.5).
inline void emit_plot_data(const std::filesystem::path& dir) {
    const CsvTable table = read_csv((dir / "solution.csv").string());
    const int ct = table.column("t"), cv = table.column("variable"),
              cval = table.column("value");
    if (ct < 0 || cv < 0 || cval < 0)
        throw io_error("emit_plot_data: solution.csv lacks required columns t/variable/value");
    if (table.rows.empty()) throw io_error("emit_plot_data: solution.csv has no data rows");

    const auto group = [](const CsvTable& tab, int tcol, int vcol, int valcol) {
        std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> out;
        std::map<std::string, size_t> index;
        double tmax = 0.0;
        for (const auto& row : tab.rows) {
            const std::string& var = row[static_cast<size_t>(vcol)];
            const std::string& tv = row[static_cast<size_t>(tcol)];
            const std::string& val = row[static_cast<size_t>(valcol)];
            if (tv.empty() || val.empty()) continue;
            const double t = std::stod(tv);
            tmax = std::max(tmax, t);
            auto it = index.find(var);
            if (it == index.end()) {
                index.emplace(var, out.size());
                out.push_back({var, {}});
                it = index.find(var);
            }
            out[it->second].second.emplace_back(t, std::stod(val));
        }
        return std::make_pair(out, tmax);
    };

    const auto [series, tmax] = group(table, ct, cv, cval);
    if (series.empty()) throw io_error("emit_plot_data: solution.csv has no plottable rows");
    const double horizon = tmax / 1.5;
    const auto write_series =
        [&](const std::string& stem, const std::string& var,
            const std::vector<std::pair<double, double>>& pts, double marker) {
            const std::filesystem::path path =
                dir / (stem + detail::sanitize_filename(var) + ".dat");
            std::ofstream out(path, std::ios::binary);
            if (!out) throw io_error("emit_plot_data: cannot open '" + path.string() + "'");
            out << "# " << var << "; training horizon marker t = " << format_double(marker)
                << "\n";
            for (const auto& [t, v] : pts)
                out << format_double(t) << ' ' << format_double(v) << '\n';
            if (!out) throw io_error("emit_plot_data: failed writing '" + path.string() + "'");
        };
    for (const auto& [var, pts] : series) write_series("plot_", var, pts, horizon);

    const std::filesystem::path err_path = dir / "errors.csv";
    if (std::filesystem::exists(err_path)) {
        const CsvTable errs = read_csv(err_path.string());
        const int et = errs.column("t"), ev = errs.column("variable"),
                  ee = errs.column("rel_error");
        if (et < 0 || ev < 0 || ee < 0)
            throw io_error("emit_plot_data: errors.csv lacks required columns");
        const auto [eseries, etmax] = group(errs, et, ev, ee);
        for (const auto& [var, pts] : eseries)
            write_series("plot_error_", var, pts, etmax);
    }
}

inline RunResult run_experiment(ExperimentConfig cfg, const RunOverrides& ov = {}) {
    // Seed override reaches every seeded consumer (grid draws, sweep draws).
    if (ov.seed) {
        cfg.grid.seed = *ov.seed;
        cfg.experiment.sweep_seed = *ov.seed;
        if (cfg.grid.mode == "uniform-iid") cfg.resolved["grid"]["seed"] = *ov.seed;
        if (cfg.experiment.kind == "consistency")
            cfg.resolved["experiment"]["seed"] = *ov.seed;
    }

    // Output directory: flag > config > environment > working directory.
    std::string dir_str = ov.output_dir.value_or(cfg.output.directory);
    if (dir_str.empty()) {
        const char* env = std::getenv("KPATHS_OUTPUT_DIR");
        if (env != nullptr && *env != '\0') dir_str = env;
    }
    if (dir_str.empty()) dir_str = ".";
    const std::filesystem::path dir(dir_str);
    cfg.output.directory = dir_str;
    cfg.resolved["output"]["directory"] = dir_str;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("run_experiment: cannot create '" + dir_str + "': " + ec.message());

    // Manifest first: it documents the run even if the solve fails.
    {
        nlohmann::json manifest = cfg.resolved;
        manifest["_software_version"] = kSoftwareVersion;
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        if (!out) throw io_error("run_experiment: cannot write manifest.json");
        out << manifest.dump(2) << '\n';
        if (!out) throw io_error("run_experiment: failed writing manifest.json");
    }

    const TrainingGrid grid = build_grid(cfg.grid);
    const double horizon = grid.horizon();
    detail::note(ov, "fitting " + cfg.model_name + " (" + cfg.experiment.kind + ", N=" +
                         std::to_string(grid.size()) + ")");
    const KernelSolution sol = solve_model(cfg.model, cfg.kernel, grid, cfg.solver);
    detail::note(ov, "solver status: " + sol.status +
                         ", mean squared residual " + format_double(sol.mean_sq_residual));

    // --- solution.csv: fitted levels and derivatives over [0, 1.5T] ---
    const std::vector<double> eval_times = linspace(0.0, 1.5 * horizon, 401);
    {
        std::vector<CsvRow> rows;
        const auto push = [&](double t, const std::string& var, double value) {
            CsvRow row;
            row.t = t;
            row.variable = var;
            row.value = value;
            row.norm_sq = sol.norm_sq_total;
            row.nu = cfg.kernel.nu;
            row.ell = cfg.kernel.ell;
            row.n_points = grid.size();
            if (cfg.grid.mode == "uniform-iid") row.seed = cfg.grid.seed;
            row.status = sol.status;
            rows.push_back(std::move(row));
        };
        for (double t : eval_times) {
            const PathPoint p = sol.evaluate(t);
            for (int m = 0; m < cfg.model.state_dim; ++m) {
                push(t, cfg.model.state_names[static_cast<size_t>(m)], p.x(m));
                push(t, cfg.model.state_names[static_cast<size_t>(m)] + "_dot", p.xdot(m));
            }
            for (int m = 0; m < cfg.model.state_dim; ++m) {
                push(t, cfg.model.costate_names[static_cast<size_t>(m)], p.mu(m));
                push(t, cfg.model.costate_names[static_cast<size_t>(m)] + "_dot",
                     p.mudot(m));
            }
            for (int p_idx = 0; p_idx < cfg.model.jump_dim; ++p_idx)
                push(t, cfg.model.jump_names[static_cast<size_t>(p_idx)], p.y(p_idx));
        }
        write_csv((dir / "solution.csv").string(), rows);
    }

    // --- errors.csv: pointwise relative gaps against the model's oracle ---
    const std::vector<double> error_times = linspace(0.0, horizon, 401);
    std::optional<Trajectory> oracle = detail::oracle_trajectory(cfg, cfg.model, error_times);
    if (oracle) {
        const Trajectory fit = sol.sample(error_times);
        std::vector<CsvRow> rows;
        const auto push_series = [&](const std::string& var, const std::vector<VectorXd>& a,
                                     const std::vector<VectorXd>& b, int comp) {
            double denom = 0.0;
            for (const VectorXd& v : b) denom = std::max(denom, std::abs(v(comp)));
            if (denom <= 1e-8) return;
            for (size_t i = 0; i < error_times.size(); ++i) {
                CsvRow row;
                row.t = error_times[i];
                row.variable = var;
                row.value = a[i](comp);
                row.rel_error = std::abs(a[i](comp) - b[i](comp)) / denom;
                row.nu = cfg.kernel.nu;
                row.ell = cfg.kernel.ell;
                row.n_points = grid.size();
                row.status = sol.status;
                rows.push_back(std::move(row));
            }
        };
        for (int m = 0; m < cfg.model.state_dim; ++m)
            push_series(cfg.model.state_names[static_cast<size_t>(m)], fit.x_path,
                        oracle->x_path, m);
        for (int m = 0; m < cfg.model.state_dim; ++m)
            push_series(cfg.model.costate_names[static_cast<size_t>(m)], fit.mu_path,
                        oracle->mu_path, m);
        if (!oracle->y_path.empty() && oracle->y_path.front().size() == cfg.model.jump_dim)
            for (int p = 0; p < cfg.model.jump_dim; ++p)
                push_series(cfg.model.jump_names[static_cast<size_t>(p)], fit.y_path,
                            oracle->y_path, p);
        write_csv((dir / "errors.csv").string(), rows);
    }

    // --- report.csv: transversality diagnostics (solve) or sweep cells ---
    const std::string& kind = cfg.experiment.kind;
    if (kind == "solve") {
        const TransversalityReport tv = transversality_residual(
            sol, std::max(cfg.experiment.transversality_horizon, horizon));
        std::vector<CsvRow> rows;
        for (size_t i = 0; i < tv.times.size(); ++i)
            for (int m = 0; m < cfg.model.state_dim; ++m) {
                CsvRow row;
                row.t = tv.times[i];
                row.variable = "transversality:" +
                               cfg.model.state_names[static_cast<size_t>(m)];
                row.value = tv.values[i](m);
                row.nu = cfg.kernel.nu;
                row.ell = cfg.kernel.ell;
                row.n_points = grid.size();
                row.status = sol.status;
                rows.push_back(std::move(row));
            }
        write_csv((dir / "report.csv").string(), rows);
    } else if (kind == "robustness" || kind == "consistency") {
        SweepReport report;
        const Trajectory* ref = oracle ? &*oracle : nullptr;
        if (kind == "robustness") {
            std::vector<KernelSpec> kernels;
            for (const auto& [nu, ell] : cfg.experiment.nu_ell_grid)
                kernels.push_back(KernelSpec{nu, ell, cfg.kernel.sigma});
            report = robustness_sweep(cfg.model, kernels, cfg.solver, grid, ref);
        } else {
            report = consistency_sweep(cfg.model, cfg.kernel, cfg.solver,
                                       cfg.experiment.n_list, cfg.experiment.sampling,
                                       static_cast<unsigned>(cfg.experiment.sweep_seed),
                                       horizon, ref);
        }
        std::vector<CsvRow> rows;
        for (const SweepCell& cell : report.cells) {
            CsvRow row;
            row.variable = "x";
            row.rel_error = std::isfinite(cell.eps_x) ? std::optional<double>(cell.eps_x)
                                                      : std::nullopt;
            row.norm_sq = cell.norm_sq;
            row.nu = cell.nu;
            row.ell = cell.ell;
            row.n_points = cell.N;
            if (cell.seed) row.seed = *cell.seed;
            row.status = cell.status;
            rows.push_back(row);
            if (cfg.model.jump_dim > 0) {
                row.variable = "y";
                row.rel_error = std::isfinite(cell.eps_y)
                                    ? std::optional<double>(cell.eps_y)
                                    : std::nullopt;
                rows.push_back(row);
            }
        }
        write_csv((dir / "report.csv").string(), rows);
    } else if (kind == "sweep-initial-conditions") {
        const std::vector<SteadyState> sss = find_steady_states(cfg.model);
        if (sss.empty())
            throw non_convergence("run_experiment: no steady state found for basin labels");
        std::vector<CsvRow> rows;
        for (double x0 : cfg.experiment.x0_list) {
            ModelSpec m = cfg.model;
            m.initial_state = kpaths::detail::constant_vector(cfg.model.state_dim, x0);
            CsvRow row;
            row.variable = "x0";
            row.value = x0;
            row.nu = cfg.kernel.nu;
            row.ell = cfg.kernel.ell;
            row.n_points = grid.size();
            try {
                const KernelSolution s = solve_model(m, cfg.kernel, grid, cfg.solver);
                const double xT = s.evaluate(horizon).x(0);
                size_t nearest = 0;
                for (size_t k = 1; k < sss.size(); ++k)
                    if (std::abs(xT - sss[k].x(0)) < std::abs(xT - sss[nearest].x(0)))
                        nearest = k;
                row.rel_error = std::abs(xT - sss[nearest].x(0)) /
                                std::abs(sss[nearest].x(0));
                row.norm_sq = s.norm_sq_total;
                row.status = "ss=" + std::to_string(nearest) +
                             (s.converged ? "" : ";" + s.status);
            } catch (const std::exception& e) {
                row.status = std::string("failed: ") + e.what();
            }
            rows.push_back(std::move(row));
        }
        write_csv((dir / "report.csv").string(), rows);
    } else if (kind == "shooting-compare") {
        std::vector<CsvRow> rows;
        const std::vector<SteadyState> sss = find_steady_states(cfg.model);
        for (double T : cfg.experiment.horizons) {
            CsvRow row;
            row.t = T;
            row.variable = "cond_grad_psi";
            row.nu = cfg.kernel.nu;
            row.ell = cfg.kernel.ell;
            row.n_points = grid.size();
            try {
                const std::vector<double> times = linspace(0.0, T, 401);
                std::optional<Trajectory> ref =
                    detail::oracle_trajectory(cfg, cfg.model, times);
                if (!ref) {
                    row.status = "no oracle";
                } else if (cfg.model_name == "asset-pricing") {
                    row.status = "closed form";
                } else {
                    // Recompute the shooting fit to recover the conditioning.
                    const SteadyState& target =
                        detail::select_target_steady_state(cfg, cfg.model, sss);
                    ShootingResult sr = shooting_solve(
                        cfg.model, T, target.x,
                        kpaths::detail::constant_vector(1, 0.4 * target.mu(0)),
                        kpaths::detail::constant_vector(1, 2.5 * target.mu(0)), times);
                    row.value = sr.jacobian_condition;
                    row.status = sr.converged ? "converged" : "not converged";
                    const PathErrors pe = compare_paths(sol.sample(times), sr.path);
                    CsvRow err = row;
                    err.variable = "x";
                    err.value = std::nullopt;
                    err.rel_error = pe.eps_x_max;
                    rows.push_back(err);
                    if (cfg.model.jump_dim > 0) {
                        err.variable = "y";
                        err.rel_error = pe.eps_y_max;
                        rows.push_back(err);
                    }
                }
            } catch (const std::exception& e) {
                row.status = std::string("failed: ") + e.what();
            }
            rows.push_back(std::move(row));
        }
        write_csv((dir / "report.csv").string(), rows);
    }

    if (cfg.output.emit_plot_data) emit_plot_data(dir);

    if ((kind == "solve" || kind == "shooting-compare") && !sol.converged)
        throw non_convergence("run_experiment: solver finished with status '" + sol.status +
                              "' (mean squared residual " +
                              format_double(sol.mean_sq_residual) + ")");

    RunResult result;
    result.output_dir = dir;
    result.status = sol.status;
    result.converged = sol.converged;
    detail::note(ov, "wrote " + dir_str);
    return result;
}

}  // namespace kpaths
