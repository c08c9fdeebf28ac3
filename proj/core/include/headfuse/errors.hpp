#ifndef HEADFUSE_ERRORS_HPP_
#define HEADFUSE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace headfuse {

/// Input violates an operation's shape or value preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// API used out of order (e.g. backward on a value the tape never recorded).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed configuration: missing files, unknown names, bad values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary decode failure. `offset` is the byte position where decoding stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Training diverged (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace headfuse

#endif  // HEADFUSE_ERRORS_HPP_
