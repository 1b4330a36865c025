#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fpb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity reached a value that must stay finite. `node` is the
/// graph node where it was detected, or npos when outside a graph.
class NonFiniteError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NonFiniteError(const std::string& what, std::size_t node = npos)
      : Error(what), node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint file.
class DataFormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};

class TruncatedFileError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};

class CountMismatchError : public DataFormatError {
 public:
  using DataFormatError::DataFormatError;
};

}  // namespace fpb
