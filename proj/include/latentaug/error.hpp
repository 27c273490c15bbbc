// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latentaug {

enum class ErrorKind {
  EmptyInput,
  DimensionMismatch,
  FormatError,
  IntegrityError,
  EmptyDataset,
  InvalidScenario,
  NumericalError,
  InvalidConfig,
  InvalidLayer,
  InvalidPrior,
  InvalidSigma,
  EmptySubdomainPool,
  MissingCondition,
  InsufficientSupport,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace latentaug
