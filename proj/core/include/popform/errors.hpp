#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace popform {

// Caller handed in something that violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A factorization or density evaluation broke down numerically.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every restart of a mixture fit failed; one diagnostic line per restart.
class FitFailure : public std::runtime_error {
 public:
  FitFailure(const std::string& what, std::vector<std::string> diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

}  // namespace popform
