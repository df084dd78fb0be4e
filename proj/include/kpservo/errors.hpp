#pragma once

#include <stdexcept>
#include <string>

namespace kpservo {

// Thrown when a joint configuration violates the model's joint limits.
struct LimitViolationError : std::runtime_error {
  explicit LimitViolationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by project() for points at or behind the camera plane.
struct BehindCameraError : std::runtime_error {
  explicit BehindCameraError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when the finite-difference Jacobian oracle cannot be evaluated.
struct OracleUnavailableError : std::runtime_error {
  explicit OracleUnavailableError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a Kalman recursion produces non-finite values or an
// innovation covariance that stays singular after regularization.
struct FilterDivergenceError : std::runtime_error {
  explicit FilterDivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when the Jacobian adaptation produces non-finite entries.
struct AdaptationDivergenceError : std::runtime_error {
  explicit AdaptationDivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an operation is invoked before its state is initialized,
// e.g. control_law on a Jacobian estimate with no update applied yet.
struct NotReadyError : std::runtime_error {
  explicit NotReadyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for invalid or inconsistent experiment configuration files.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kpservo
