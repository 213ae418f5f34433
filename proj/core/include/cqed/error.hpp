#pragma once

#include <stdexcept>
#include <string>

namespace cqed {

// Every failure raised by the library derives from Error; the kind drives
// the CLI exit-code mapping.
enum class ErrorKind {
  InvalidParameter,
  Numeric,
  IntegrationFailure,
  Truncation,
  Unsupported,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidParameter : public Error {
 public:
  InvalidParameter(std::string field, const std::string& what)
      : Error(ErrorKind::InvalidParameter, field + ": " + what),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::Numeric, what) {}
};

class IntegrationFailure : public Error {
 public:
  IntegrationFailure(double time_reached, const std::string& what)
      : Error(ErrorKind::IntegrationFailure,
              what + " (t = " + std::to_string(time_reached) + ")"),
        time_reached_(time_reached) {}
  double time_reached() const noexcept { return time_reached_; }

 private:
  double time_reached_;
};

class TruncationFailure : public Error {
 public:
  TruncationFailure(double population, int n_max, const std::string& what)
      : Error(ErrorKind::Truncation, what), population_(population),
        n_max_(n_max) {}
  double population() const noexcept { return population_; }
  int n_max() const noexcept { return n_max_; }

 private:
  double population_;
  int n_max_;
};

class UnsupportedConfiguration : public Error {
 public:
  explicit UnsupportedConfiguration(const std::string& what)
      : Error(ErrorKind::Unsupported, what) {}
};

}  // namespace cqed
