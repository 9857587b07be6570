#pragma once

#include <stdexcept>
#include <string>

namespace hhls {

// Caller violated a documented precondition (bad argument, dimension mismatch).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// The input is valid but leaves nothing to compute on (e.g. a grid with no cells).
class DegenerateInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The requested operation is not available for this kind of object.
class UnsupportedOperationError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Reading or writing an artifact failed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hhls
