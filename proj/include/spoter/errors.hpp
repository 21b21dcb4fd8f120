#pragma once

#include <stdexcept>
#include <string>

namespace spoter {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Problems with user-supplied inputs: bad flags, bad config values,
// malformed or mismatched data files. The CLI maps these to exit code 2.
class UsageError : public Error {
public:
  using Error::Error;
};

// Malformed record in a data file; message names the line.
class ParseError : public UsageError {
public:
  using UsageError::UsageError;
};

// Landmark count or frame structure violates the fixed layout.
class LayoutError : public UsageError {
public:
  using UsageError::UsageError;
};

// Unknown gloss, duplicate mapping entry, or vocabulary mismatch.
class VocabularyError : public UsageError {
public:
  using UsageError::UsageError;
};

// Out-of-range or contradictory configuration.
class ConfigError : public UsageError {
public:
  using UsageError::UsageError;
};

// Corrupt or truncated checkpoint file.
class FormatError : public UsageError {
public:
  using UsageError::UsageError;
};

// Runtime failures (CLI exit code 1).
class ShapeError : public Error {
public:
  using Error::Error;
};

// An op produced NaN/Inf, or a gradient check tripped.
class NumericError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace spoter
