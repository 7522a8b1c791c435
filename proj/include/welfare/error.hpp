#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace welfare {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or recipe, caught before anything runs.
class ValidationError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

// A numeric argument outside the function's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at position " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// A metric whose denominator is zero. Never silently mapped to 0.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public Error {
 public:
  NetworkError(const std::string& what, bool retryable, int status = 0)
      : Error(what), retryable_(retryable), status_(status) {}
  bool retryable() const noexcept { return retryable_; }
  int status() const noexcept { return status_; }

 private:
  bool retryable_;
  int status_;
};

class UnknownCountryError : public Error {
 public:
  UnknownCountryError(const std::string& country, std::vector<std::string> candidates)
      : Error(format(country, candidates)), candidates_(std::move(candidates)) {}
  const std::vector<std::string>& candidates() const noexcept { return candidates_; }

 private:
  static std::string format(const std::string& country, const std::vector<std::string>& c) {
    std::string msg = "unknown country '" + country + "'";
    if (!c.empty()) {
      msg += "; did you mean: ";
      for (std::size_t i = 0; i < c.size(); ++i) msg += (i ? ", " : "") + c[i];
    }
    return msg;
  }
  std::vector<std::string> candidates_;
};

// Persisted state failed a hash check.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Required input data (manifest, images, snapshot) is missing.
class DataUnavailableError : public Error {
 public:
  using Error::Error;
};

// Training produced NaN/inf.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

}  // namespace welfare
