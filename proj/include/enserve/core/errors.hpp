#pragma once

#include <stdexcept>
#include <string>

namespace enserve {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed spec document or structurally invalid input (wrong dimensions,
// unknown device kind, non-ascending batch menu, ...).
class SpecError : public Error {
 public:
  using Error::Error;
};

// Worst-fit placement failed: some model fits no device.
class AllocationError : public Error {
 public:
  AllocationError(const std::string& model_name, const std::string& what)
      : Error(what), model_name(model_name) {}
  std::string model_name;
};

// BBS requires at least as many GPUs as models.
class BaselineError : public Error {
 public:
  using Error::Error;
};

// Enumeration refused because the matrix space exceeds the caller's cap.
class CapExceededError : public Error {
 public:
  using Error::Error;
};

// Worker pool failed to come up (a worker reported out-of-memory).
class StartupError : public Error {
 public:
  using Error::Error;
};

// Message protocol violation (duplicate segment/model pair, bad block shape).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace enserve
