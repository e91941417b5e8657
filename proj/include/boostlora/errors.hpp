#ifndef BOOSTLORA_ERRORS_HPP
#define BOOSTLORA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace boostlora {

/// Non-finite or otherwise malformed values fed to an operation.
struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Incompatible matrix/vector dimensions.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Index window or scalar argument outside its admissible range.
struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Iterative routine failed to converge or produced non-finite output.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad experiment or adapter configuration (fail-closed validation).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rotate basis ran out of singular vectors for the requested round.
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Corrupt or truncated on-disk artifact.
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace boostlora

#endif // BOOSTLORA_ERRORS_HPP
