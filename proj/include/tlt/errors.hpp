#pragma once

#include <stdexcept>
#include <string>

namespace tlt {

// Malformed input document (registry, corpus line, rules file, ...).
// The message carries a location such as "tools[2].params[1]".
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or gold data handed to an operation.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Two per-token structures that must line up do not.
struct AlignmentError : std::runtime_error {
    explicit AlignmentError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem-level failure (missing file, unreadable path).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tlt
