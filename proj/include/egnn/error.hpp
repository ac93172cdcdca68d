#pragma once

#include <stdexcept>
#include <string>

namespace egnn {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not fit together.
class DimensionError : public Error {
public:
    using Error::Error;
};

class InvalidMaskError : public Error {
public:
    using Error::Error;
};

/// The finite-difference oracle hit a non-finite function value.
class OracleError : public Error {
public:
    using Error::Error;
};

/// Malformed or missing dataset files.
class DatasetFormatError : public Error {
public:
    using Error::Error;
};

/// Dataset files that are individually well-formed but disagree with each other.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// A layer that needs a fixed vertex count was handed something else.
class FixedSizeError : public Error {
public:
    using Error::Error;
};

/// Architecture strings that fail to parse or whose shapes do not flow.
class ArchitectureError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss during training.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t epoch, std::size_t batch)
        : Error(what), epoch_(epoch), batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

/// Bad command-line or config input.
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace egnn
