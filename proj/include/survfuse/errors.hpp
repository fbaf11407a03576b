#pragma once

#include <stdexcept>
#include <string>

namespace survfuse {

// Error classes map 1:1 onto CLI exit codes so scripts can branch on them.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 1; }
};

// Bad configuration: unknown keys, invalid model kind, inconsistent options.
struct ConfigError : Error {
    using Error::Error;
    int exit_code() const override { return 2; }
};

// Bad input data: malformed files, duplicate ids, shape mismatches.
struct DataError : Error {
    using Error::Error;
    int exit_code() const override { return 3; }
};

// Optimization failed: non-convergence, NaN loss, singular Hessian.
struct ConvergenceError : Error {
    using Error::Error;
    int exit_code() const override { return 4; }
};

// Metric undefined on the given inputs (e.g. no comparable pairs).
struct EvalError : Error {
    using Error::Error;
    int exit_code() const override { return 5; }
};

}  // namespace survfuse
