#pragma once

#include <stdexcept>
#include <string>

namespace zfda {

// Error taxonomy shared by the library and the CLI exit-code table.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad key, bad value, unknown key, missing required setting.
struct ConfigError : Error {
    using Error::Error;
};

// Unreadable, malformed or truncated input data / files.
struct DataError : Error {
    using Error::Error;
};

// Tensor/layer dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Training produced a non-finite loss or parameter.
struct DivergenceError : Error {
    using Error::Error;
};

// SHA-256 digest mismatch between a model and a patch.
struct DigestError : Error {
    using Error::Error;
};

}  // namespace zfda
