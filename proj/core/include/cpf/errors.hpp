#pragma once

#include <stdexcept>
#include <string>

namespace cpf {

/// Raised when a domain object or configuration violates one of its
/// documented invariants. The message names the offending field and the
/// condition it must satisfy.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cpf
