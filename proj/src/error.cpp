// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/error.hpp"

namespace latentaug {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::IntegrityError: return "IntegrityError";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidLayer: return "InvalidLayer";
    case ErrorKind::InvalidPrior: return "InvalidPrior";
    case ErrorKind::InvalidSigma: return "InvalidSigma";
    case ErrorKind::EmptySubdomainPool: return "EmptySubdomainPool";
    case ErrorKind::MissingCondition: return "MissingCondition";
    case ErrorKind::InsufficientSupport: return "InsufficientSupport";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace latentaug
