#pragma once

#include <stdexcept>
#include <string>

namespace clusterfusion {

enum class ErrorKind {
    parse,       // malformed input (file row, JSON payload, ...)
    validation,  // well-formed but violates a contract
    io,          // filesystem
    transport,   // HTTP / network, after retries
    llm,         // model output unusable after retries
    config,      // bad run configuration
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::parse: return "parse";
        case ErrorKind::validation: return "validation";
        case ErrorKind::io: return "io";
        case ErrorKind::transport: return "transport";
        case ErrorKind::llm: return "llm";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message),
          kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace clusterfusion
