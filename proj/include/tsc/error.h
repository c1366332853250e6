#pragma once

#include <stdexcept>
#include <string>

namespace tsc {

// Malformed input text. `position` is a byte offset when known.
class SyntaxError : public std::runtime_error {
public:
    SyntaxError(const std::string &what, std::size_t position)
        : std::runtime_error(what + " (at byte " + std::to_string(position) + ")"), position_(position) {}
    explicit SyntaxError(const std::string &what) : std::runtime_error(what) {}

    std::size_t position() const { return position_; }

private:
    std::size_t position_ = 0;
};

// Input parsed but violates a data-model invariant (dangling reference, bad route, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad experiment / command-line configuration. `key` names the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string &what)
        : std::runtime_error(key + ": " + what), key_(std::move(key)) {}

    const std::string &key() const { return key_; }

private:
    std::string key_;
};

// A run had to be aborted (e.g. a controller produced an invalid phase).
class RuntimeAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tsc
