#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mgcheb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidAdjacency : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

/// Raised while reading dataset files; carries the offending file and line (0 if not line-specific).
class DatasetError : public Error {
 public:
  DatasetError(std::string file, std::size_t line, const std::string& what)
      : Error(format(file, line, what)), file_(std::move(file)), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& file, std::size_t line, const std::string& what) {
    std::string msg = file;
    if (line > 0) msg += ":" + std::to_string(line);
    return msg + ": " + what;
  }

  std::string file_;
  std::size_t line_;
};

/// Raised for invalid configuration values; carries the key name.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace mgcheb
