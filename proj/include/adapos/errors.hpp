#pragma once

#include <stdexcept>
#include <string>

namespace adapos {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes
// (config -> 2, numeric -> 3, io -> 4), everything else is a plain failure.

struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Evaluation with n_e = 1 is rejected: a single antenna carries no spatial
// diversity and self-attention over one embedding is a no-op, so neither
// training nor evaluation on singleton sets is meaningful.
struct excluded_case_error : config_error {
    explicit excluded_case_error(const std::string& msg) : config_error(msg) {}
};

struct validation_error : std::runtime_error {
    explicit validation_error(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

// A sample whose taps are all zero (or otherwise carries no usable signal).
struct degenerate_sample_error : std::runtime_error {
    explicit degenerate_sample_error(const std::string& msg)
        : std::runtime_error("degenerate sample: " + msg) {}
};

// Least-squares design matrix is rank deficient (e.g. collinear points).
struct degenerate_fit_error : std::runtime_error {
    explicit degenerate_fit_error(const std::string& msg)
        : std::runtime_error("degenerate fit: " + msg) {}
};

// Two nodes with no connecting path in the k-NN graph. Callers decide
// whether to resample the pair or cap the distance.
struct unreachable_error : std::runtime_error {
    explicit unreachable_error(const std::string& msg)
        : std::runtime_error("unreachable pair: " + msg) {}
};

// The finite-difference oracle detected a problem with its own premises
// (typically a non-deterministic objective).
struct oracle_error : std::runtime_error {
    explicit oracle_error(const std::string& msg) : std::runtime_error("oracle error: " + msg) {}
};

}  // namespace adapos
