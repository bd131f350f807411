#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsam {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf values, zero-norm vectors, probabilities outside (0,1).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition (non-scalar backward, missing gradients...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; carries file and 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Binary format problems (token banks, checkpoints).
class FormatError : public Error {
 public:
  enum class Code {
    kBadMagic,
    kVersionMismatch,
    kTruncated,
    kModalityMismatch,
    kInvalidHeader,
    kDuplicateEntity,
    kTrailingData,
    kLayoutMismatch,
  };

  FormatError(Code code, const std::string& what) : Error(what), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace tsam
