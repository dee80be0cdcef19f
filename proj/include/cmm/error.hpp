// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cmm {

/// Failure categories raised by the library. Every throw site uses one of these
/// so callers (tests, CLI exit-code mapping, Python bindings) can branch on kind.
enum class Errc {
  ZeroNorm,
  DegenerateData,
  NotSymmetric,
  NotPSD,
  NotConverged,
  DimMismatch,
  MissingFile,
  BadMagic,
  BadVersion,
  DimensionMismatch,
  LabelOutOfRange,
  NonNormalizedRow,
  BadFlipIndex,
  IoError,
  InsufficientSamples,
  BadConfig,
  TapeMismatch,
  SingleClass,
  OutOfRange,
  ShapeMismatch,
  NonFiniteGradient,
  NonFiniteLoss,
  EmptyBatch,
  EmptyValSplit,
  TooFewSamples,
  SingularCovariance,
};

const char* errc_name(Errc code) noexcept;

/// True for errors caused by bad user input (flags, files, configs) rather than
/// numerical breakdown during a run.
bool is_validation_error(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cmm
