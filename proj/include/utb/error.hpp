#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace utb {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed binary or text input (bad magic, invalid header field, ...).
struct FormatError : Error {
    using Error::Error;
};

// Input ended before the declared payload was complete.
struct TruncationError : FormatError {
    std::uint64_t expected_bytes;
    std::uint64_t received_bytes;
    TruncationError(std::uint64_t expected, std::uint64_t received)
        : FormatError("truncated input: expected " + std::to_string(expected) +
                      " bytes, received " + std::to_string(received)),
          expected_bytes(expected),
          received_bytes(received) {}
};

// Line-oriented text input failed to parse; carries the 1-based line number.
struct ParseError : Error {
    int line;
    ParseError(int line_no, const std::string& msg)
        : Error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

// Invalid configuration or arguments.
struct ConfigError : Error {
    using Error::Error;
};

// Tensor/layer shape mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Depth measurement requested on invalid inputs (e.g. a "no echo" peak).
struct MeasureError : Error {
    using Error::Error;
};

// Inputs that are individually valid but do not fit together
// (e.g. checkpoint input shape vs. scan bundle shape).
struct CompatError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; carries where it first appeared.
struct DivergenceError : Error {
    using Error::Error;
};

// Sink/source failure mid-write; carries how many bytes made it out.
struct IoError : Error {
    std::uint64_t bytes_written;
    IoError(const std::string& msg, std::uint64_t written)
        : Error(msg + " (bytes written: " + std::to_string(written) + ")"),
          bytes_written(written) {}
};

}  // namespace utb
