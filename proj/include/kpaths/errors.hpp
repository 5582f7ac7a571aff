#pragma once

// Exception taxonomy shared by the library and the CLI. The CLI maps these
// onto process exit codes: config_error -> 2, non_convergence -> 3,
// io_error -> 4. Plain std::invalid_argument / std::domain_error signal API
// misuse by calling code and are not expected to escape a correct program.

#include <stdexcept>
#include <string>

namespace kpaths {

/// Invalid or inconsistent user-supplied configuration (file or struct).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// The solver finished without meeting its residual tolerance.
struct non_convergence : std::runtime_error {
    explicit non_convergence(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure while reading inputs or writing outputs.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kpaths
