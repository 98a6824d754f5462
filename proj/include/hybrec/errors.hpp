#pragma once

#include <stdexcept>
#include <string>

namespace hybrec {

// Malformed input data. `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what
                                : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateKeyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ArgumentError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A data invariant was violated (non-unit vector, duplicate ranking entry...).
class InvariantError : public std::logic_error {
  using std::logic_error::logic_error;
};

class NonConvergenceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class LookupError : public std::out_of_range {
  using std::out_of_range::out_of_range;
};

// A file another stage was supposed to produce is missing.
class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(const std::string& path)
      : std::runtime_error("missing input: " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Malformed or inconsistent pipeline configuration.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hybrec
