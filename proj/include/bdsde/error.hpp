#pragma once

#include <stdexcept>
#include <string>

namespace bdsde {

enum class ErrorKind {
    invalid_argument,
    domain,
    index,
    catalog,
    capability,
    numeric,
    conditioning,
    convergence,
    configuration,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace bdsde
