#pragma once

#include <stdexcept>
#include <string>

namespace humocon {

// Error taxonomy. Every throwing site uses one of these so callers (and the
// CLI) can map failures to exit codes without string matching.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct CapabilityError : std::runtime_error {
    explicit CapabilityError(const std::string& msg) : std::runtime_error("capability error: " + msg) {}
};

struct TrainAbort : std::runtime_error {
    explicit TrainAbort(const std::string& msg) : std::runtime_error("training aborted: " + msg) {}
};

#define HUMOCON_CHECK(cond, etype, msg)                                                            \
    do {                                                                                           \
        if (!(cond)) throw etype(msg);                                                             \
    } while (0)

}  // namespace humocon
