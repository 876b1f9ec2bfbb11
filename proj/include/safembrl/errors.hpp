#pragma once

#include <stdexcept>
#include <string>

namespace safembrl {

// Invalid argument or malformed configuration detected before any computation.
struct InvalidInputError : std::invalid_argument {
    explicit InvalidInputError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical operation left its domain of validity (indefinite Gram matrix,
// variance below tolerance, degenerate angle encoding, ...).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / serialization failure (checkpoints, logs, config files).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace safembrl
