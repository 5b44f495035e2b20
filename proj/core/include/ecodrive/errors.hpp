#pragma once

#include <stdexcept>
#include <string>

namespace ecodrive {

// Base of every error the library raises. `code()` is a short stable token
// used by the CLI when it prints a machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// A configuration value is missing, malformed or out of range.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config", field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class SafetyViolation : public Error {
 public:
  explicit SafetyViolation(const std::string& what) : Error("safety", what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what) : Error("lookup", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace ecodrive
