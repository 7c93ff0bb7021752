#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace truncnet {

/// Base of every error raised by the library. Callers that only need to
/// distinguish "our" failures from foreign ones can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class InvalidDepthError : public Error {
 public:
  InvalidDepthError(const std::string& what, int max_depth) : Error(what), max_depth_(max_depth) {}
  int max_depth() const noexcept { return max_depth_; }

 private:
  int max_depth_;
};

/// Raised when a weight map does not cover every parameter of the retained
/// units. `missing()` lists the absent keys.
class RemapError : public Error {
 public:
  RemapError(const std::string& what, std::vector<std::string> missing)
      : Error(what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Row-level parse failure; `line()` is 1-based and counts the header.
class RowError : public Error {
 public:
  RowError(const std::string& what, std::size_t line) : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& what, long step, long batch)
      : Error(what), step_(step), batch_(batch) {}
  long step() const noexcept { return step_; }
  long batch() const noexcept { return batch_; }

 private:
  long step_;
  long batch_;
};

class UndefinedAucError : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace truncnet
