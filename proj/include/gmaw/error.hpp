#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmaw {

/// Error categories. The numeric values are the CLI exit codes.
enum class ErrorCode : int {
    Validation = 2,
    Convergence = 3,
    DataShape = 4,
};

[[nodiscard]] constexpr std::string_view error_tag(ErrorCode code) {
    switch (code) {
    case ErrorCode::Validation: return "E_VALIDATION";
    case ErrorCode::Convergence: return "E_CONVERGENCE";
    case ErrorCode::DataShape: return "E_DATA_SHAPE";
    }
    return "E_UNKNOWN";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorCode::Validation, what) {}
};

/// Raised when a state becomes non-finite during simulation.
class SimulationDiverged : public Error {
public:
    explicit SimulationDiverged(const std::string& what) : Error(ErrorCode::Convergence, what) {}
};

class DataShapeError : public Error {
public:
    explicit DataShapeError(const std::string& what) : Error(ErrorCode::DataShape, what) {}
};

}  // namespace gmaw
