// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace swgan {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor or image shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside its domain (negative clip constant, bad axis, ...).
class ValueError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed container: bad magic, version mismatch, checksum failure.
class FormatError : public Error {
public:
    using Error::Error;
};

// A loss or gradient became NaN/Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

// Collects every problem found while validating a configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& problems) {
        std::ostringstream os;
        os << "invalid configuration (" << problems.size() << " problem"
           << (problems.size() == 1 ? "" : "s") << ")";
        for (const auto& p : problems) {
            os << "\n  - " << p;
        }
        return os.str();
    }

    std::vector<std::string> problems_;
};

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace swgan
