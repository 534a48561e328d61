#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Error taxonomy shared by all modules. Failures carry a message; callers
// discriminate on the type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad strategy id, bad architecture, out-of-range
// parameters, impossible splits.
struct ConfigError : Error {
    using Error::Error;
};

// Dimension mismatch between tensors that must be congruent.
struct ShapeError : Error {
    using Error::Error;
};

// A non-finite value appeared where finite arithmetic is required.
struct NumericError : Error {
    using Error::Error;
};

// A zero vector was passed where a direction is required.
struct DegenerateInputError : Error {
    using Error::Error;
};

// Class label outside [0, n_classes).
struct LabelError : Error {
    using Error::Error;
};

// Malformed input file; message includes the offending line number.
struct ParseError : Error {
    using Error::Error;
};

// Client messages or models that cannot be combined.
struct AggregationError : Error {
    using Error::Error;
};

// Wire-format header field overflow.
struct EncodingError : Error {
    using Error::Error;
};

}  // namespace fedsim
