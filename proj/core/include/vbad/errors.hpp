#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vbad {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or basis geometry does not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, bad CLI values, violated attack preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File format or filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The query budget cannot cover the requested oracle evaluation.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(std::uint64_t used, std::uint64_t budget)
      : Error("query budget exhausted: " + std::to_string(used) + "/" +
              std::to_string(budget)),
        used_(used),
        budget_(budget) {}

  std::uint64_t used() const noexcept { return used_; }
  std::uint64_t budget() const noexcept { return budget_; }

 private:
  std::uint64_t used_;
  std::uint64_t budget_;
};

/// An external oracle could not be reached or answered with garbage.
class OracleUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace vbad
