#pragma once

#include <stdexcept>
#include <string>

namespace dynaseg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that breaks a type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A frame has no associated pose in a trajectory.
class GapError : public Error {
 public:
  GapError(int frame, const std::string& what) : Error(what), frame_(frame) {}
  int frame() const noexcept { return frame_; }

 private:
  int frame_;
};

/// Rank-deficient input to an estimator.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// An external or in-process plugin broke its output contract.
class PluginError : public Error {
 public:
  using Error::Error;
};

}  // namespace dynaseg
