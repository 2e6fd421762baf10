#pragma once

#include <stdexcept>
#include <string>

namespace wkc {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user configuration (unknown keys, bad ranges, missing paths).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data violates a precondition (shape, weights, dimensions).
class DataError : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed where it should not have.
class NumericError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw DataError(message);
    }
}

}  // namespace detail

}  // namespace wkc
