#pragma once

#include <stdexcept>
#include <string>

namespace amgc {

// Error taxonomy mirrored by the CLI exit codes:
// configuration -> 2, data -> 3, numerical -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Old-class losses are undefined at the initial task; this signals that case
// explicitly instead of returning a bogus value.
struct EmptyOldSetError : ConfigError {
    EmptyOldSetError()
        : ConfigError("old-class loss undefined: no old classes exist yet") {}
};

}  // namespace amgc
