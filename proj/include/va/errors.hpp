#pragma once

#include <stdexcept>
#include <string>

namespace va {

// Exit-code taxonomy used by the CLI: 1 usage/config, 2 data, 3 numerical.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 2; }
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
    int exit_code() const override { return 1; }
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
    int exit_code() const override { return 2; }
};

// Shape disagreements between tensors count as bad data.
struct ShapeError : DataError {
    explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
    int exit_code() const override { return 3; }
};

}  // namespace va
