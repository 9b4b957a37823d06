#pragma once

#include <stdexcept>
#include <string>

namespace squidlet {

// Error taxonomy. Usage / config problems exit the CLI with code 1,
// everything else with code 2.

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : UsageError {
    using UsageError::UsageError;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SequenceLengthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TruncationError : SequenceLengthError {
    using SequenceLengthError::SequenceLengthError;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf escaping a forward op.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivisionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace squidlet
