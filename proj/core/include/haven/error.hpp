// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every haven module.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace haven {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input line (bad JSON). `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed JSON that violates the record schema (unknown enum, missing field).
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Variant-transformation protocol broken (wrong group size, repeated tags).
class ProtocolViolation : public Error {
 public:
  ProtocolViolation(std::string group_id, const std::string& what)
      : Error("group " + group_id + ": " + what), group_id_(std::move(group_id)) {}
  const std::string& group_id() const noexcept { return group_id_; }

 private:
  std::string group_id_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class RequestTooLarge : public Error {
 public:
  using Error::Error;
};

// 4xx from an endpoint; never retried.
class PermanentFailure : public Error {
 public:
  PermanentFailure(int status, const std::string& what)
      : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

// 5xx / timeout that survived every retry.
class TransientFailure : public Error {
 public:
  TransientFailure(int attempts, const std::string& what)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class ExtractionFormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateWeightError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(int step, const std::string& what)
      : NumericError("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace haven
