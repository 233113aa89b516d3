#pragma once

#include <stdexcept>
#include <string>

namespace staticgeo {

/// Base class for every failure raised by the library. Carries the module and
/// operation that failed so command-line reports can name them.
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string operation, const std::string& what)
        : std::runtime_error(module + "." + operation + ": " + what),
          module_(std::move(module)), operation_(std::move(operation)) {}

    const std::string& module() const noexcept { return module_; }
    const std::string& operation() const noexcept { return operation_; }

private:
    std::string module_;
    std::string operation_;
};

/// A coordinate tuple outside the chart domain (or of the wrong length).
class OutOfDomainError : public Error {
public:
    using Error::Error;
};

/// Metric that is not symmetric positive-definite or cannot be inverted.
class DegenerateMetricError : public Error {
public:
    using Error::Error;
};

/// Endpoints that no admissible curve joins.
class UnreachableError : public Error {
public:
    using Error::Error;
};

/// Adaptive step size fell below the floor.
class StiffnessError : public Error {
public:
    using Error::Error;
};

/// Every seed curve left the domain before minimization could start.
class SeedFailureError : public Error {
public:
    using Error::Error;
};

/// Geodesic with lambda = 0 cannot be reduced to a classical trajectory.
class NotReducibleError : public Error {
public:
    using Error::Error;
};

/// Jacobi metric degenerates (E - V below the floor) somewhere on the curve.
class NearTurningPointError : public Error {
public:
    using Error::Error;
};

/// Bad user input: malformed configuration, unknown keys, invalid options.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace staticgeo
