#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hyperq {

/// Base for all recoverable library errors. `kind()` is a short machine-readable tag
/// surfaced by the CLI's error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what) : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error("parse_error", source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hyperq
