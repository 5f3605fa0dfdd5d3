#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dynerr {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument or violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

// A query state does not admit a valid estimate (e.g. too few exceedances).
class InvalidState : public Error {
 public:
  InvalidState(const std::string& what, std::size_t count)
      : Error(what), count_(count) {}
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

// Numerical integration produced a non-finite state.
class BlowUp : public Error {
 public:
  BlowUp(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace dynerr
