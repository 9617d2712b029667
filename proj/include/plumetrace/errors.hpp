#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plumetrace {

/// Invalid input: bad parameters, malformed files, inconsistent sizes.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A linear solve or iteration failed to meet its accuracy contract.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::ptrdiff_t step = -1)
      : std::runtime_error(step >= 0 ? what + " (time step " + std::to_string(step) + ")" : what),
        step_(step) {}

  /// Time step at which the failure occurred, or -1 when not time dependent.
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace detail
}  // namespace plumetrace
