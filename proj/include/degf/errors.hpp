// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace degf {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerics.
class DimensionError : public Error {
 public:
  using Error::Error;
};
class DegenerateDistribution : public Error {
 public:
  using Error::Error;
};
class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

// Configuration and input validation; the CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Backends; the CLI maps these to exit code 3.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};
class GeneratorUnavailable : public Error {
 public:
  using Error::Error;
};
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Metrics.
class EmptyInput : public Error {
 public:
  using Error::Error;
};
class MissingTruth : public Error {
 public:
  explicit MissingTruth(std::vector<std::string> ids);
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};
class MalformedSubset : public Error {
 public:
  using Error::Error;
};
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace degf
