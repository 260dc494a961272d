#pragma once

#include <stdexcept>
#include <string>

namespace orf {

// Bad user input: malformed files, out-of-range values, broken invariants.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure: non-convergence, degenerate configurations.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem trouble: missing or unwritable paths.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace orf
