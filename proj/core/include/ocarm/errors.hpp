// Copyright 2026 The OCARM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OCARM_ERRORS_HPP_
#define OCARM_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ocarm {

// Root of every error raised by the library. Callers that only want to
// report and exit can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Input data violating a precondition (out-of-vocabulary id, bad label...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed text input. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that lacks a required field.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, std::string field)
      : Error("line " + std::to_string(line) + ": missing field '" + field + "'"),
        line_(line),
        field_(std::move(field)) {}
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// Shape or wiring contract violated by a caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced during a forward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Checkpoint or teacher does not fit the consumer's model configuration.
class IncompatibleError : public Error {
 public:
  IncompatibleError(std::string field, const std::string& what)
      : Error("incompatible " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Stored payload does not match its checksum or is truncated.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A ranking metric was requested on data where it is not defined.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Command-line misuse (missing teacher checkpoint, leaked eval without flag).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ocarm

#endif  // OCARM_ERRORS_HPP_
