#pragma once

#include <stdexcept>
#include <string>

namespace emkken {

// One exception type per failure class so call sites and tests can
// distinguish them; all carry a plain-text message.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error("schema error: " + msg) {}
};

struct LookupError : std::runtime_error {
    explicit LookupError(const std::string& msg) : std::runtime_error("lookup error: " + msg) {}
};

struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence error: " + msg) {}
};

struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& msg) : std::runtime_error("index error: " + msg) {}
};

}  // namespace emkken
