#pragma once

#include <stdexcept>
#include <string>

namespace unlearn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Incompatible matrix/tensor dimensions.
struct ShapeError : Error {
    using Error::Error;
};

/// Non-finite values or numerically invalid input.
struct NumericError : Error {
    using Error::Error;
};

/// Invalid argument values (out-of-range labels, bad fractions, ...).
struct ValidationError : Error {
    using Error::Error;
};

/// Malformed files (checkpoints, dataset blobs, configs).
struct FormatError : Error {
    using Error::Error;
};

/// Representation carries no signal (all singular values zero).
struct DegenerateError : Error {
    using Error::Error;
};

/// Training diverged; carries the epoch where the loss became non-finite.
struct TrainingError : Error {
    int epoch = -1;
    TrainingError(const std::string& msg, int at_epoch)
        : Error(msg), epoch(at_epoch) {}
};

}  // namespace unlearn
