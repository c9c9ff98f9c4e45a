#pragma once

#include <stdexcept>
#include <string>

namespace merc {

// Error taxonomy. Every throwing path in the library uses one of these so
// callers (and tests) can distinguish a bad config from a bad dataset from
// a genuine shape bug.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("dataset error: " + msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric-input error: " + msg) {}
};

struct StateError : Error {
    explicit StateError(const std::string& msg) : Error("state error: " + msg) {}
};

struct TaxonomyError : Error {
    explicit TaxonomyError(const std::string& msg) : Error("taxonomy error: " + msg) {}
};

struct DeterminismError : Error {
    explicit DeterminismError(const std::string& msg) : Error("determinism error: " + msg) {}
};

struct MetricsError : Error {
    explicit MetricsError(const std::string& msg) : Error("metrics error: " + msg) {}
};

}  // namespace merc
