#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prn {

// Base of every error raised by the library. The CLI prints what() as a
// single machine-parseable line "error: <kind>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& m) : Error("argument", m) {}
};

class UnsupportedKernelError : public Error {
 public:
  explicit UnsupportedKernelError(const std::string& m) : Error("unsupported-kernel", m) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& m) : Error("state", m) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& m)
      : Error("parse", "line " + std::to_string(line) + ": " + m), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& m) : Error("invariant", m) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& m) : Error("training", m) {}
};

}  // namespace prn
