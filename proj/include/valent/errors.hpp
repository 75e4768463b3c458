#pragma once

#include <stdexcept>
#include <string>

namespace valent {

// Error taxonomy shared by the library and the C API status codes.
enum class ErrorKind {
    shape,    // dimension / shape mismatch
    config,   // invalid model or run configuration
    input,    // bad caller input (tokens, sentences, arguments)
    trace,    // required trace fields were not recorded
    spec,     // invalid pooling / layer spec
    io,       // file missing, unreadable, unwritable
    format,   // file exists but is malformed or corrupt
    eval,     // metric undefined for the given data
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) raise(kind, msg);
}

} // namespace valent
