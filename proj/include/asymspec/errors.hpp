#pragma once

#include <stdexcept>
#include <string>

namespace asymspec {

/// Invalid user input: model parameters, file formats, CLI values.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine failed to converge or produced unusable output.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "0.1.0";

} // namespace asymspec
