#pragma once

#include <stdexcept>
#include <string>

namespace gridwatch {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input text; carries a 1-based line number when known.
struct ParseError : Error {
    explicit ParseError(const std::string& msg, int line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_no(line) {}
    int line_no;
};

// Structurally invalid data (disconnected grid, bad references, bad config values).
struct ValidationError : Error {
    using Error::Error;
};

// Grid is not observable (rank-deficient observation matrix).
struct UnobservableError : Error {
    using Error::Error;
};

// Numerical failure in an estimator.
struct EstimationError : Error {
    using Error::Error;
};

// A requested dispatch/mask/scenario cannot be realized.
struct InfeasibleError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Artifact format errors, each distinct so callers can tell them apart.
struct VersionError : IoError {
    using IoError::IoError;
};
struct TruncatedError : IoError {
    using IoError::IoError;
};
struct ShapeError : IoError {
    using IoError::IoError;
};
// Artifact lineage (config hash / model hash) does not match.
struct LineageError : IoError {
    using IoError::IoError;
};

}  // namespace gridwatch
