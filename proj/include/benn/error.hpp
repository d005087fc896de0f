#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace benn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Thrown by log/div and friends when an operand is outside the op's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf reached the reverse sweep. `op()` names the op that produced it.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string op, std::string what)
      : Error(std::move(what)), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Invalid experiment/constraint configuration. `path()` is a JSON pointer.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed input file. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace benn
