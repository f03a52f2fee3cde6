// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace cpg {

// Process exit codes used by the CLI.
enum class ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kData; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

// ---------------------------------------------------------------------------
// Data errors (exit code 2)
// ---------------------------------------------------------------------------

class DataError : public Error {
 public:
  using Error::Error;
};

// A document does not match its schema. `field` is a JSON-pointer-like path.
class SchemaError : public DataError {
 public:
  SchemaError(std::string field, const std::string& what)
      : DataError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ReferenceError : public DataError {
 public:
  explicit ReferenceError(std::string missing_id, const std::string& context)
      : DataError(context + ": unresolved reference '" + missing_id + "'"),
        missing_id_(std::move(missing_id)) {}
  const std::string& missing_id() const noexcept { return missing_id_; }

 private:
  std::string missing_id_;
};

class GradeRangeError : public DataError {
 public:
  GradeRangeError(std::string id, long long grade)
      : DataError("grade " + std::to_string(grade) + " out of range [1,5]" +
                  (id.empty() ? std::string{} : " for '" + id + "'")),
        id_(std::move(id)),
        grade_(grade) {}
  const std::string& id() const noexcept { return id_; }
  long long grade() const noexcept { return grade_; }

 private:
  std::string id_;
  long long grade_;
};

class UnknownIdError : public DataError {
 public:
  explicit UnknownIdError(const std::string& id)
      : DataError("unknown id '" + id + "'") {}
};

// A readability formula was asked to divide by zero words or sentences.
class UndefinedInputError : public DataError {
 public:
  using DataError::DataError;
};

class ModeMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class InvalidArgumentError : public DataError {
 public:
  using DataError::DataError;
};

class TemplateError : public DataError {
 public:
  using DataError::DataError;
};

// Raw model output that could not be parsed. The raw text is kept for audit.
class MalformedResponseError : public DataError {
 public:
  MalformedResponseError(const std::string& what, std::string raw)
      : DataError(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class MalformedVerdictError : public MalformedResponseError {
 public:
  using MalformedResponseError::MalformedResponseError;
};

class CassetteError : public DataError {
 public:
  CassetteError(const std::string& path, std::size_t line,
                const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MissingInputError : public DataError {
 public:
  using DataError::DataError;
};

// ---------------------------------------------------------------------------
// Backend errors (exit code 3)
// ---------------------------------------------------------------------------

class BackendError : public Error {
 public:
  BackendError(const std::string& what, std::string fingerprint)
      : Error(fingerprint.empty() ? what : what + " [" + fingerprint + "]"),
        fingerprint_(std::move(fingerprint)) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kBackend; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  std::string fingerprint_;
};

// Retryable: connection failures, timeouts, 429/5xx, empty bodies.
class TransportError : public BackendError {
 public:
  TransportError(const std::string& what, std::string fingerprint,
                 unsigned attempts = 1)
      : BackendError(what, std::move(fingerprint)), attempts_(attempts) {}
  unsigned attempts() const noexcept { return attempts_; }

 private:
  unsigned attempts_;
};

class AuthError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ReplayMissError : public BackendError {
 public:
  explicit ReplayMissError(std::string fingerprint)
      : BackendError("replay miss: fingerprint not in cassette",
                     std::move(fingerprint)) {}
};

class NoMatchingRuleError : public BackendError {
 public:
  explicit NoMatchingRuleError(std::string fingerprint)
      : BackendError("mock backend: no rule matches request",
                     std::move(fingerprint)) {}
};

}  // namespace cpg
