#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hekp {

// Base of every error thrown by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input text. `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Input that parses but violates a data contract (empty dataset, bad ratios...).
class DataError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A loss component became non-finite during training.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& component, const std::string& what)
      : Error("training diverged in " + component + ": " + what), component_(component) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

}  // namespace hekp
