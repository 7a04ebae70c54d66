#pragma once

#include <stdexcept>
#include <string>

namespace vecchia {

// Base of every exception thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid input: bad parameters, mismatched dimensions, malformed config.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A computation that could not be completed (singular matrix, non-positive
// density term, accuracy not reached within budget).
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

} // namespace vecchia
