#pragma once

#include <stdexcept>
#include <string>

namespace qed {

/// Exit-code categories used by the CLI. Library code throws the typed
/// exceptions below; the CLI maps them to these process exit codes.
enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    numeric_error = 3,
    io_error = 4,
};

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual ExitCode exit_code() const { return ExitCode::numeric_error; }
    ~Error() override = default;
};

/// Invalid physical parameter, malformed config, out-of-range value.
struct ConfigError : Error {
    using Error::Error;
    ExitCode exit_code() const override { return ExitCode::config_error; }
};

/// Invalid physical parameter value (non-positive capacitance, xi outside
/// [0,1], ...). A config-category error: these always originate from input.
struct InvalidParameterError : ConfigError {
    using ConfigError::ConfigError;
};

/// Operand matrices built on different truncations, or mismatched sizes.
struct DimensionError : Error {
    using Error::Error;
};

/// Numerical failure: eigendecomposition did not converge, solver broke down.
struct NumericError : Error {
    using Error::Error;
};

/// Adaptive integrator step size underflowed (stiffness) or fixed-step
/// integration lost resolution.
struct StiffnessError : NumericError {
    using NumericError::NumericError;
};

/// Bracketed search found no interior minimum.
struct SearchFailureError : NumericError {
    using NumericError::NumericError;
};

/// The Liouvillian null space has dimension > 1: no unique steady state.
struct DegenerateSteadyStateError : NumericError {
    using NumericError::NumericError;
};

/// Requested reduced-model parameters sit at or beyond the parametric
/// instability threshold (mu >= 1).
struct InstabilityError : NumericError {
    using NumericError::NumericError;
};

/// Filesystem failure while emitting outputs.
struct IoError : Error {
    using Error::Error;
    ExitCode exit_code() const override { return ExitCode::io_error; }
};

} // namespace qed
