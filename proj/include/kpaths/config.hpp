#pragma once

// JSON experiment configuration: parsing, validation with field-path error
// messages, and re-serialization of the fully resolved config (the manifest).
// Keys starting with '_' are ignored everywhere, so a manifest written by
// run_experiment (which adds "_software_version") parses back unchanged.

#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "kernels.hpp"
#include "models.hpp"
#include "solver.hpp"

namespace kpaths {

inline constexpr const char* kSoftwareVersion = "kpaths 1.0.0";

struct GridConfig {
    std::string mode;  ///< equispaced | explicit | uniform-iid
    double horizon = 0.0;
    int n = 0;
    std::vector<double> points;  ///< explicit mode
    unsigned long seed = 0;      ///< uniform-iid mode
};

struct ExperimentSpec {
    std::string kind;  ///< solve | sweep-initial-conditions | robustness |
                       ///< consistency | shooting-compare
    double transversality_horizon = 200.0;
    std::vector<double> x0_list;
    std::vector<std::pair<double, double>> nu_ell_grid;
    std::vector<int> n_list;
    std::string sampling = "equispaced";
    unsigned long sweep_seed = 0;
    std::vector<double> horizons;  ///< shooting-compare
};

struct OutputConfig {
    std::string directory;
    bool emit_plot_data = false;
};

struct ExperimentConfig {
    std::string model_name;
    ModelSpec model;
    KernelSpec kernel;
    GridConfig grid;
    SolverConfig solver;
    ExperimentSpec experiment;
    OutputConfig output;
    nlohmann::json resolved;  ///< every field explicit; serializes to the manifest
};

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::string& path,
                         const std::set<std::string>& allowed) {
    for (const auto& item : obj.items()) {
        if (!item.key().empty() && item.key()[0] == '_') continue;
        if (allowed.find(item.key()) == allowed.end())
            throw config_error("config: unknown key '" + path + "." + item.key() + "'");
    }
}

inline const nlohmann::json& require_block(const nlohmann::json& root,
                                           const std::string& name) {
    if (!root.contains(name))
        throw config_error("config: missing block '" + name + "'");
    const nlohmann::json& block = root.at(name);
    if (!block.is_object())
        throw config_error("config: block '" + name + "' must be an object");
    return block;
}

inline double get_number(const nlohmann::json& obj, const std::string& path,
                         const std::string& key) {
    if (!obj.contains(key))
        throw config_error("config: missing field '" + path + "." + key + "'");
    if (!obj.at(key).is_number())
        throw config_error("config: '" + path + "." + key + "' must be a number");
    return obj.at(key).get<double>();
}

inline double opt_number(const nlohmann::json& obj, const std::string& path,
                         const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number())
        throw config_error("config: '" + path + "." + key + "' must be a number");
    return obj.at(key).get<double>();
}

inline long opt_integer(const nlohmann::json& obj, const std::string& path,
                        const std::string& key, long fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number_integer())
        throw config_error("config: '" + path + "." + key + "' must be an integer");
    return obj.at(key).get<long>();
}

inline bool opt_bool(const nlohmann::json& obj, const std::string& path,
                     const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean())
        throw config_error("config: '" + path + "." + key + "' must be a boolean");
    return obj.at(key).get<bool>();
}

inline std::string opt_string(const nlohmann::json& obj, const std::string& path,
                              const std::string& key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string())
        throw config_error("config: '" + path + "." + key + "' must be a string");
    return obj.at(key).get<std::string>();
}

inline std::vector<double> number_array(const nlohmann::json& arr, const std::string& path) {
    if (!arr.is_array())
        throw config_error("config: '" + path + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& v : arr) {
        if (!v.is_number())
            throw config_error("config: '" + path + "' must be an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline VectorXd to_vector(const std::vector<double>& v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

inline std::vector<double> from_vector(const VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

/// Build the model named in the config; parameter values fall back to each
/// model's baseline. Domain violations surface as config errors carrying the
/// field path.
inline ModelSpec build_model(const std::string& name, const nlohmann::json& params,
                             nlohmann::json& resolved_params) {
    const std::string path = "model.params";
    const auto p = [&](const std::string& key, double fallback) {
        const double v = detail::opt_number(params, path, key, fallback);
        resolved_params[key] = v;
        return v;
    };
    try {
        if (name == "neoclassical-growth") {
            detail::require_keys(params, path, {"x0", "delta", "r", "a"});
            return make_neoclassical_growth(p("x0", 1.0), p("delta", 0.1), p("r", 0.11),
                                            p("a", 1.0 / 3.0));
        }
        if (name == "skiba") {
            detail::require_keys(params, path, {"x0", "delta", "r", "a", "A", "b1", "b2"});
            return make_skiba_growth(p("x0", 1.0), p("delta", 0.1), p("r", 0.11),
                                     p("a", 1.0 / 3.0), p("A", 0.5), p("b1", 3.0),
                                     p("b2", 2.5));
        }
        if (name == "asset-pricing") {
            detail::require_keys(params, path, {"x0", "c", "g", "r"});
            return make_asset_pricing(p("x0", 1.0), p("c", 0.02), p("g", -0.2),
                                      p("r", 0.1));
        }
        if (name == "human-capital") {
            detail::require_keys(params, path,
                                 {"x_k0", "x_h0", "delta_k", "delta_h", "a_k", "a_h", "r",
                                  "lambda_p"});
            return make_human_capital(p("x_k0", 1.5), p("x_h0", 1.37), p("delta_k", 0.1),
                                      p("delta_h", 0.05), p("a_k", 1.0 / 3.0),
                                      p("a_h", 1.0 / 4.0), p("r", 0.11),
                                      p("lambda_p", 5e-3));
        }
        if (name == "optimal-advertising") {
            detail::require_keys(params, path, {"x0", "r", "c", "beta", "kappa"});
            return make_optimal_advertising(p("x0", 0.4), p("r", 0.11), p("c", 0.5),
                                            p("beta", 0.05), p("kappa", 0.5));
        }
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("config: model.params: ") + e.what());
    }
    throw config_error(
        "config: 'model.name' must be one of neoclassical-growth, skiba, asset-pricing, "
        "human-capital, optimal-advertising (got '" +
        name + "')");
}

inline TrainingGrid build_grid(const GridConfig& gc) {
    try {
        if (gc.mode == "equispaced") return TrainingGrid::equispaced(gc.horizon, gc.n);
        if (gc.mode == "uniform-iid")
            return uniform_iid_grid(gc.horizon, gc.n, static_cast<unsigned>(gc.seed));
        TrainingGrid grid{gc.points};
        grid.validate();
        return grid;
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("config: grid: ") + e.what());
    }
}

inline ExperimentConfig parse_config(const nlohmann::json& root) {
    if (!root.is_object()) throw config_error("config: top level must be an object");
    detail::require_keys(root, "",
                         {"model", "kernel", "grid", "solver", "experiment", "output"});

    ExperimentConfig cfg;
    nlohmann::json res;

    // --- model ---
    const nlohmann::json& model = detail::require_block(root, "model");
    detail::require_keys(model, "model", {"name", "params"});
    if (!model.contains("name") || !model.at("name").is_string())
        throw config_error("config: 'model.name' must be a string");
    cfg.model_name = model.at("name").get<std::string>();
    nlohmann::json params = model.contains("params") ? model.at("params")
                                                     : nlohmann::json::object();
    if (!params.is_object()) throw config_error("config: 'model.params' must be an object");
    nlohmann::json resolved_params = nlohmann::json::object();
    cfg.model = build_model(cfg.model_name, params, resolved_params);
    res["model"] = {{"name", cfg.model_name}, {"params", resolved_params}};

    // --- kernel ---
    const nlohmann::json& kernel = detail::require_block(root, "kernel");
    detail::require_keys(kernel, "kernel", {"nu", "ell", "sigma"});
    cfg.kernel.nu = detail::get_number(kernel, "kernel", "nu");
    cfg.kernel.ell = detail::get_number(kernel, "kernel", "ell");
    cfg.kernel.sigma = detail::opt_number(kernel, "kernel", "sigma", 1.0);
    try {
        cfg.kernel.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("config: kernel: ") + e.what());
    }
    res["kernel"] = {{"nu", cfg.kernel.nu}, {"ell", cfg.kernel.ell},
                     {"sigma", cfg.kernel.sigma}};

    // --- grid ---
    const nlohmann::json& grid = detail::require_block(root, "grid");
    detail::require_keys(grid, "grid", {"mode", "T", "N", "points", "seed"});
    cfg.grid.mode = detail::opt_string(grid, "grid", "mode", "equispaced");
    if (cfg.grid.mode != "equispaced" && cfg.grid.mode != "explicit" &&
        cfg.grid.mode != "uniform-iid")
        throw config_error(
            "config: 'grid.mode' must be equispaced, explicit, or uniform-iid");
    nlohmann::json grid_res = {{"mode", cfg.grid.mode}};
    if (cfg.grid.mode == "explicit") {
        if (!grid.contains("points"))
            throw config_error("config: missing field 'grid.points'");
        cfg.grid.points = detail::number_array(grid.at("points"), "grid.points");
        grid_res["points"] = cfg.grid.points;
    } else {
        cfg.grid.horizon = detail::get_number(grid, "grid", "T");
        cfg.grid.n = static_cast<int>(detail::opt_integer(grid, "grid", "N", 0));
        if (cfg.grid.n < 2)
            throw config_error("config: 'grid.N' must be an integer >= 2");
        grid_res["T"] = cfg.grid.horizon;
        grid_res["N"] = cfg.grid.n;
        if (cfg.grid.mode == "uniform-iid") {
            cfg.grid.seed =
                static_cast<unsigned long>(detail::opt_integer(grid, "grid", "seed", 0));
            grid_res["seed"] = cfg.grid.seed;
        }
    }
    build_grid(cfg.grid);  // validates eagerly so errors carry the config context
    res["grid"] = grid_res;

    // --- solver ---
    const nlohmann::json& solver = detail::require_block(root, "solver");
    detail::require_keys(solver, "solver",
                         {"lambda", "lambda_p", "penalize_jump_derivatives",
                          "residual_tolerance", "step_tolerance", "max_iterations",
                          "initial_coefficient_scale", "initial_mu0", "initial_y0",
                          "bounds"});
    SolverConfig sc;
    sc.ridge_lambda = detail::opt_number(solver, "solver", "lambda", sc.ridge_lambda);
    sc.extra_penalty_weight =
        detail::opt_number(solver, "solver", "lambda_p", sc.extra_penalty_weight);
    sc.penalize_jump_derivatives = detail::opt_bool(solver, "solver",
                                                    "penalize_jump_derivatives",
                                                    sc.penalize_jump_derivatives);
    sc.residual_tolerance =
        detail::opt_number(solver, "solver", "residual_tolerance", sc.residual_tolerance);
    sc.step_tolerance =
        detail::opt_number(solver, "solver", "step_tolerance", sc.step_tolerance);
    sc.max_iterations = static_cast<int>(
        detail::opt_integer(solver, "solver", "max_iterations", sc.max_iterations));
    sc.initial_coefficient_scale = detail::opt_number(
        solver, "solver", "initial_coefficient_scale", sc.initial_coefficient_scale);
    nlohmann::json solver_res = {
        {"lambda", sc.ridge_lambda},
        {"lambda_p", sc.extra_penalty_weight},
        {"penalize_jump_derivatives", sc.penalize_jump_derivatives},
        {"residual_tolerance", sc.residual_tolerance},
        {"step_tolerance", sc.step_tolerance},
        {"max_iterations", sc.max_iterations},
        {"initial_coefficient_scale", sc.initial_coefficient_scale}};
    if (solver.contains("initial_mu0")) {
        sc.initial_mu0 = detail::to_vector(
            detail::number_array(solver.at("initial_mu0"), "solver.initial_mu0"));
        solver_res["initial_mu0"] = detail::from_vector(*sc.initial_mu0);
    }
    if (solver.contains("initial_y0")) {
        sc.initial_y0 = detail::to_vector(
            detail::number_array(solver.at("initial_y0"), "solver.initial_y0"));
        solver_res["initial_y0"] = detail::from_vector(*sc.initial_y0);
    }
    if (solver.contains("bounds")) {
        const nlohmann::json& b = solver.at("bounds");
        if (!b.is_object()) throw config_error("config: 'solver.bounds' must be an object");
        detail::require_keys(b, "solver.bounds",
                             {"mu0_lower", "mu0_upper", "y0_lower", "y0_upper"});
        nlohmann::json bounds_res = nlohmann::json::object();
        const auto apply = [&](const char* key, VectorXd& target, int want) {
            if (!b.contains(key)) return;
            const VectorXd v = detail::to_vector(detail::number_array(
                b.at(key), std::string("solver.bounds.") + key));
            if (v.size() != want)
                throw config_error(std::string("config: 'solver.bounds.") + key +
                                   "' must have length " + std::to_string(want));
            target = v;
            bounds_res[key] = detail::from_vector(v);
        };
        apply("mu0_lower", cfg.model.mu0_lower, cfg.model.state_dim);
        apply("mu0_upper", cfg.model.mu0_upper, cfg.model.state_dim);
        apply("y0_lower", cfg.model.y0_lower, cfg.model.jump_dim);
        apply("y0_upper", cfg.model.y0_upper, cfg.model.jump_dim);
        if (!bounds_res.empty()) solver_res["bounds"] = bounds_res;
    }
    sc.validate();
    cfg.solver = sc;
    res["solver"] = solver_res;

    // --- experiment ---
    const nlohmann::json& exp = detail::require_block(root, "experiment");
    detail::require_keys(exp, "experiment",
                         {"kind", "transversality_horizon", "x0_list", "nu_ell_grid",
                          "N_list", "sampling", "seed", "horizons"});
    if (!exp.contains("kind"))
        throw config_error("config: missing field 'experiment.kind'");
    cfg.experiment.kind = detail::opt_string(exp, "experiment", "kind", "");
    nlohmann::json exp_res = {{"kind", cfg.experiment.kind}};
    const std::string& kind = cfg.experiment.kind;
    if (kind == "solve") {
        cfg.experiment.transversality_horizon =
            detail::opt_number(exp, "experiment", "transversality_horizon", 200.0);
        exp_res["transversality_horizon"] = cfg.experiment.transversality_horizon;
    } else if (kind == "sweep-initial-conditions") {
        if (!exp.contains("x0_list"))
            throw config_error("config: missing field 'experiment.x0_list'");
        cfg.experiment.x0_list =
            detail::number_array(exp.at("x0_list"), "experiment.x0_list");
        if (cfg.experiment.x0_list.empty())
            throw config_error("config: 'experiment.x0_list' must be non-empty");
        exp_res["x0_list"] = cfg.experiment.x0_list;
    } else if (kind == "robustness") {
        if (!exp.contains("nu_ell_grid"))
            throw config_error("config: missing field 'experiment.nu_ell_grid'");
        const nlohmann::json& pairs = exp.at("nu_ell_grid");
        if (!pairs.is_array() || pairs.empty())
            throw config_error(
                "config: 'experiment.nu_ell_grid' must be a non-empty array of [nu, ell]");
        for (const auto& pr : pairs) {
            const std::vector<double> v =
                detail::number_array(pr, "experiment.nu_ell_grid[i]");
            if (v.size() != 2)
                throw config_error(
                    "config: 'experiment.nu_ell_grid' entries must be [nu, ell] pairs");
            cfg.experiment.nu_ell_grid.emplace_back(v[0], v[1]);
        }
        exp_res["nu_ell_grid"] = pairs;
    } else if (kind == "consistency") {
        if (!exp.contains("N_list"))
            throw config_error("config: missing field 'experiment.N_list'");
        for (double v : detail::number_array(exp.at("N_list"), "experiment.N_list"))
            cfg.experiment.n_list.push_back(static_cast<int>(v));
        if (cfg.experiment.n_list.empty())
            throw config_error("config: 'experiment.N_list' must be non-empty");
        cfg.experiment.sampling =
            detail::opt_string(exp, "experiment", "sampling", "equispaced");
        if (cfg.experiment.sampling != "equispaced" &&
            cfg.experiment.sampling != "uniform-iid")
            throw config_error(
                "config: 'experiment.sampling' must be equispaced or uniform-iid");
        cfg.experiment.sweep_seed =
            static_cast<unsigned long>(detail::opt_integer(exp, "experiment", "seed", 0));
        exp_res["N_list"] = cfg.experiment.n_list;
        exp_res["sampling"] = cfg.experiment.sampling;
        exp_res["seed"] = cfg.experiment.sweep_seed;
    } else if (kind == "shooting-compare") {
        cfg.experiment.horizons =
            exp.contains("horizons")
                ? detail::number_array(exp.at("horizons"), "experiment.horizons")
                : std::vector<double>{40.0};
        if (cfg.experiment.horizons.empty())
            throw config_error("config: 'experiment.horizons' must be non-empty");
        exp_res["horizons"] = cfg.experiment.horizons;
    } else {
        throw config_error(
            "config: 'experiment.kind' must be one of solve, sweep-initial-conditions, "
            "robustness, consistency, shooting-compare (got '" +
            kind + "')");
    }
    res["experiment"] = exp_res;

    // --- output (optional) ---
    if (root.contains("output")) {
        const nlohmann::json& out = root.at("output");
        if (!out.is_object()) throw config_error("config: block 'output' must be an object");
        detail::require_keys(out, "output", {"directory", "emit_plot_data"});
        cfg.output.directory = detail::opt_string(out, "output", "directory", "");
        cfg.output.emit_plot_data =
            detail::opt_bool(out, "output", "emit_plot_data", false);
    }
    res["output"] = {{"directory", cfg.output.directory},
                     {"emit_plot_data", cfg.output.emit_plot_data}};

    cfg.resolved = res;
    return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("config: cannot open '" + path + "'");
    nlohmann::json root;
    try {
        // Comments permitted: the shipped example configs are annotated.
        root = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/true,
                                     /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error(std::string("config: parse error in '") + path + "': " +
                           e.what());
    }
    return parse_config(root);
}

}  // namespace kpaths
