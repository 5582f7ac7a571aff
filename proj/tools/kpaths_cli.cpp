// Command-line experiment runner: `kpaths run <config.json>`.
//
// Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
// 4 I/O error. Failures print a one-line machine-readable JSON record on
// stderr: {"category": ..., "error": ...}.

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

#include <kpaths/kpaths.hpp>

namespace {

int fail(const std::string& category, const std::string& what, int code) {
    nlohmann::json record = {{"category", category}, {"error", what}};
    std::cerr << record.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kpaths: kernel-based transition paths for economic DAE models"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::optional<unsigned long> seed;
    bool quiet = false;

    CLI::App* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "path to the JSON experiment config")
        ->required();
    run->add_option("--output-dir", output_dir,
                    "output directory (overrides the config and KPATHS_OUTPUT_DIR)");
    unsigned long seed_value = 0;
    CLI::Option* seed_opt =
        run->add_option("--seed", seed_value, "override every seeded random draw");
    run->add_flag("--quiet", quiet, "suppress progress output");

    CLI11_PARSE(app, argc, argv);

    try {
        kpaths::ExperimentConfig cfg = kpaths::load_config_file(config_path);
        kpaths::RunOverrides overrides;
        if (!output_dir.empty()) overrides.output_dir = output_dir;
        if (seed_opt->count() > 0) overrides.seed = seed_value;
        overrides.quiet = quiet;
        kpaths::run_experiment(std::move(cfg), overrides);
        return 0;
    } catch (const kpaths::config_error& e) {
        return fail("config", e.what(), 2);
    } catch (const kpaths::non_convergence& e) {
        return fail("non-convergence", e.what(), 3);
    } catch (const kpaths::io_error& e) {
        return fail("io", e.what(), 4);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
}
