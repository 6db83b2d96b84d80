#pragma once

#include <stdexcept>
#include <string>

namespace spiral {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration or dimension mismatch.
struct config_error : error {
    using error::error;
};

// Non-finite value produced during numeric evaluation.
struct numeric_error : error {
    using error::error;
};

// Pipeline state violation, e.g. cache provenance mismatch.
struct state_error : error {
    using error::error;
};

// Malformed or inconsistent input stream.
struct stream_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

}  // namespace spiral
