#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fmm {

// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-conformable dimensions or mismatched vector lengths.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Index outside the valid range of a matrix or tensor.
class RangeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Malformed input. Coefficient files carry the 1-based line number; other
// inputs (suites, shape specs) use line 0.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what), line_(0) {}
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Temporary storage could not be obtained.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// A task in the worker pool failed; carries the id of the failed task.
class ExecutionError : public Error {
 public:
  ExecutionError(std::size_t task_id, const std::string& what)
      : Error("task " + std::to_string(task_id) + " failed: " + what), task_id_(task_id) {}

  std::size_t task_id() const noexcept { return task_id_; }

 private:
  std::size_t task_id_;
};

}  // namespace fmm
