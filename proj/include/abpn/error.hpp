#pragma once

#include <stdexcept>
#include <string>

namespace abpn {

/// Tensor or image dimensions do not satisfy an operation's contract.
/// `axis()` names the offending axis ("channels", "height", ...).
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(std::string op, std::string axis, const std::string& detail)
      : std::invalid_argument(op + ": dimension mismatch on " + axis + ": " + detail),
        op_(std::move(op)),
        axis_(std::move(axis)) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string op_;
  std::string axis_;
};

/// Raised by the finite-value sentinel when an op produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(std::string op)
      : std::runtime_error("non-finite value produced by op '" + op + "'"), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Malformed, truncated or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace abpn
