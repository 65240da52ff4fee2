#pragma once

#include <stdexcept>
#include <string>

namespace scenforge {

/// Syntax or reference error in an input file. line/col are 1-based; 0 means
/// unknown (e.g. the error is about a whole entity, not a text position).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string msg, int line = 0, int col = 0)
      : std::runtime_error(format(msg, line, col)), line_(line), col_(col) {}

  int line() const { return line_; }
  int col() const { return col_; }

 private:
  static std::string format(const std::string& msg, int line, int col) {
    if (line <= 0) return msg;
    return "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + msg;
  }
  int line_;
  int col_;
};

/// An abstract scenario has no realization on the given map. Callers are
/// expected to block the assignment and regenerate.
class ScenarioUnrealizable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Agent placement failed after the bounded number of retries.
class PlacementExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A spawn strategy needs a lane that does not exist (e.g. no right neighbor).
class NoLegalPlacement : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scenforge
