#pragma once

#include <stdexcept>
#include <string>

namespace fusecal {

// Malformed or inconsistent input data. The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A file that cannot be read or written. Also exit code 2 at the CLI.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fusecal
