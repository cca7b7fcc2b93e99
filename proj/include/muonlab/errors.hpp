#pragma once

#include <stdexcept>
#include <string>

namespace muonlab {

// Error taxonomy maps onto the CLI exit codes: usage/config -> 1,
// numeric/contract -> 2, I/O -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct DefinitenessError : NumericError {
    using NumericError::NumericError;
};

struct DivergenceError : NumericError {
    using NumericError::NumericError;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace muonlab
