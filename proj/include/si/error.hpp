#pragma once

#include <stdexcept>
#include <string>

namespace si {

/// Malformed input: bad file contents, out-of-range parameters, shape mismatch.
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// The numerics cannot proceed, e.g. every retained singular value is zero.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InputError(msg);
}

}  // namespace detail
}  // namespace si
