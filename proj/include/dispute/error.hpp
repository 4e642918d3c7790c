#pragma once

#include <stdexcept>
#include <string>

namespace dispute {

// Base class for all toolkit failures. Everything thrown by the library
// derives from this, so callers can distinguish data errors from bugs.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// A record in an input file could not be decoded.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, long line)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

  long line() const { return line_; }

 private:
  long line_;
};

}  // namespace dispute
