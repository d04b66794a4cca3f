#pragma once

#include <stdexcept>
#include <string>

namespace tagtopo {

// Exit-code-mapped error categories (see tools/ for the mapping).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BackendError : std::runtime_error {
    explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when an LLM response carries no extractable judgment.
struct ParseFailure : std::runtime_error {
    explicit ParseFailure(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace tagtopo
