// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace stratalign {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind { usage, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Argument shapes disagree with what an operation requires.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::data, "shape error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

enum class DataErrorCode {
  bad_magic,
  version_mismatch,
  truncated,
  size_mismatch,
  invalid,
  missing,
  io,
};

inline const char* to_string(DataErrorCode code) {
  switch (code) {
    case DataErrorCode::bad_magic: return "bad magic";
    case DataErrorCode::version_mismatch: return "version mismatch";
    case DataErrorCode::truncated: return "truncated payload";
    case DataErrorCode::size_mismatch: return "header/payload size mismatch";
    case DataErrorCode::invalid: return "invalid data";
    case DataErrorCode::missing: return "missing entry";
    case DataErrorCode::io: return "i/o error";
  }
  return "data error";
}

class DataError : public Error {
 public:
  DataError(DataErrorCode code, const std::string& what)
      : Error(ErrorKind::data, std::string(to_string(code)) + ": " + what), code_(code) {}
  DataErrorCode code() const noexcept { return code_; }

 private:
  DataErrorCode code_;
};

}  // namespace stratalign
