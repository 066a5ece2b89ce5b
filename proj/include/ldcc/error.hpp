// Copyright 2026 The ldcc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ldcc {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (e.g. digamma(0)).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied inconsistent sizes, counts or options.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary task file. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t offset_;
};

/// Inconsistent data files: unknown ids, bad CSV, mismatched dimensions.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Model parameters violate their invariants (non-SPD covariance, alpha <= 0, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint file could not be parsed or failed validation.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ldcc
