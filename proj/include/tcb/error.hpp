// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcb {

// Input or invariant violation. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed record in a line-oriented file.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& message)
      : ValidationError("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A remote or local model provider failed after exhausting retries.
// Maps to CLI exit code 3.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& message, int attempts = 1)
      : std::runtime_error(message + " (after " + std::to_string(attempts) +
                           (attempts == 1 ? " attempt)" : " attempts)")),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

}  // namespace tcb
