#pragma once

#include <stdexcept>
#include <string>

namespace lpcn {

// Shape/dimension violations (mismatched tensors, bad strides, ...).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument outside of shape issues (empty list, window too large, ...).
struct ArgError : std::runtime_error {
    explicit ArgError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed binary files (bad magic, version, CRC, truncation).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing/stale state (backward without context, optimizer key mismatch).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training loss went NaN.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// I/O failures (unwritable path, unreadable file).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lpcn
