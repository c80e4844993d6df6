#pragma once

#include <stdexcept>
#include <string>

namespace neurosid {

// Operand shapes do not conform (matmul mismatch, wrong window length, ...).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Math domain violation (log of non-positive, sqrt of negative).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violation (backward on non-scalar, empty sequence, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered where finiteness is required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value (lambda_min > lambda_max, bad enum string, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (CSV ingestion, ledger parsing).
struct IngestError : std::runtime_error {
  explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace neurosid
