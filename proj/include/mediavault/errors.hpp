#pragma once

#include <stdexcept>

namespace mediavault {

// Root of all operational errors thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem and stream failures. Message carries the path and errno text.
class IoError : public Error {
public:
    using Error::Error;
};

// Rejected domain values: malformed hashes, column parts, paths, timestamps.
class ValidationError : public Error {
public:
    using Error::Error;
};

} // namespace mediavault
