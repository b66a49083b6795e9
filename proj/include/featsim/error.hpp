#pragma once

#include <stdexcept>
#include <string>

namespace featsim {

/// Raised when an operation is called with arguments that violate its
/// documented preconditions (shape mismatch, invalid config, ...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for failures that depend on runtime state: I/O, corrupt files,
/// diverging training.
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void precondition_failed(const std::string& what) { throw PreconditionError(what); }
}  // namespace detail

#define FEATSIM_REQUIRE(cond, msg)                                \
    do {                                                          \
        if (!(cond)) ::featsim::detail::precondition_failed(msg); \
    } while (0)

}  // namespace featsim
