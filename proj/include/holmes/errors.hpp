#pragma once

#include <stdexcept>
#include <string>

namespace holmes {

// Bad argument shape or value supplied by a caller (length mismatch, empty grid, ...).
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed zoo/config/trace input. The message names the offending field.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An all-zero selector was passed where an ensemble is required.
struct EmptyEnsembleError : std::invalid_argument {
    EmptyEnsembleError() : std::invalid_argument("selector has no models (empty ensemble)") {}
};

// A metric was requested on input where it is not defined (single class, constant target).
struct UndefinedMetricError : std::domain_error {
    using std::domain_error::domain_error;
};

// Genetic exploration cannot produce enough novel selectors.
struct ExhaustionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ingest rate exceeds measured capacity; T_s is undefined.
struct OverloadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Service curve slower than the long-run arrival rate; the delay bound is infinite.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Refusal to run an intractable computation (e.g. exhaustive search on a large zoo).
struct GuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Experiment / runtime configuration problem. Message carries the field path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace holmes
