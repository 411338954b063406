#pragma once

#include <stdexcept>
#include <string>

namespace stablab {

// Bad input: a precondition of an operation does not hold.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numerical guard tripped (aliasing, tail mass, CFL, non-finite drift...).
struct NumericalGuard : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

}  // namespace stablab
