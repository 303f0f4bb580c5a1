#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gcap {

// Error taxonomy, mapped to CLI exit codes by the tool driver:
// UsageError -> 1, DataError/ShapeError/IndexError/ContractError -> 2,
// NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

struct NumericError : Error {
    NumericError(const std::string& msg, int64_t step) : Error(msg), step(step) {}
    int64_t step = -1;
};

}  // namespace gcap
