#pragma once

#include <stdexcept>
#include <string>

namespace fareval {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precondition violations on operation inputs.
struct InvalidArgument : Error {
    using Error::Error;
};

// normalize() on an all-zero distribution.
struct DegenerateDistribution : Error {
    using Error::Error;
};

// Target requested for a topic with no usable relevant documents.
struct DegenerateTarget : Error {
    using Error::Error;
};

// Metric has no defined value for this input (e.g. no relevant docs).
struct UndefinedMetric : Error {
    using Error::Error;
};

// Bootstrap CI over fewer than two topics.
struct UndefinedCI : Error {
    using Error::Error;
};

// Malformed external input; always carries a position.
struct ParseError : Error {
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), path(path), line(line) {}
    std::string path;
    std::size_t line;
};

struct ConfigError : Error {
    using Error::Error;
};

struct MissingInput : Error {
    using Error::Error;
};

// A violated internal invariant; maps to exit code 3 in the CLI.
struct InternalError : Error {
    using Error::Error;
};

}  // namespace fareval
