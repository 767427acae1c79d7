#pragma once

#include <stdexcept>

namespace pfl {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Misuse of a gradient tape (detached node, repeated backward).
struct TapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf showed up where finiteness is part of the contract.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PartitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pfl
