#pragma once

#include <stdexcept>
#include <string>

namespace fragrate {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// An argument lies outside the mathematical domain of the operation.
struct DomainError : Error {
    using Error::Error;
};

// Adaptive quadrature could not reach the requested tolerance.
struct QuadratureError : Error {
    using Error::Error;
};

// Exact sampling from an infinite-activity measure was requested without
// a positive truncation level.
struct TruncationRequired : Error {
    using Error::Error;
};

// A root finder could not bracket a sign change on its search interval.
struct RootBracketError : Error {
    using Error::Error;
};

// The Volterra solver's mesh-halving error estimate did not contract at
// the expected order.
struct MeshError : Error {
    using Error::Error;
};

// A kernel cell integral near the singular endpoint failed to converge.
struct SingularTailError : Error {
    using Error::Error;
};

// The scan for the first zero of q -> W^(-q)(beta) hit its ceiling.
struct ScanExhausted : Error {
    using Error::Error;
};

// A sign classification was requested closer to zero than the ambiguity margin.
struct ToleranceError : Error {
    using Error::Error;
};

// A rate fit was requested with too few usable points.
struct InsufficientPoints : Error {
    using Error::Error;
};

// Configuration file is malformed, has unknown keys, or violates a precondition.
struct ConfigError : Error {
    using Error::Error;
};

} // namespace fragrate
