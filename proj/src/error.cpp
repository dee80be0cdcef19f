// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/error.hpp"

namespace cmm {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ZeroNorm: return "ZeroNorm";
    case Errc::DegenerateData: return "DegenerateData";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NotPSD: return "NotPSD";
    case Errc::NotConverged: return "NotConverged";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::MissingFile: return "MissingFile";
    case Errc::BadMagic: return "BadMagic";
    case Errc::BadVersion: return "BadVersion";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NonNormalizedRow: return "NonNormalizedRow";
    case Errc::BadFlipIndex: return "BadFlipIndex";
    case Errc::IoError: return "IoError";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::BadConfig: return "BadConfig";
    case Errc::TapeMismatch: return "TapeMismatch";
    case Errc::SingleClass: return "SingleClass";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::EmptyValSplit: return "EmptyValSplit";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::SingularCovariance: return "SingularCovariance";
  }
  return "Unknown";
}

bool is_validation_error(Errc code) noexcept {
  switch (code) {
    case Errc::BadConfig:
    case Errc::OutOfRange:
    case Errc::MissingFile:
    case Errc::BadMagic:
    case Errc::BadVersion:
    case Errc::DimensionMismatch:
    case Errc::LabelOutOfRange:
    case Errc::NonNormalizedRow:
    case Errc::BadFlipIndex:
    case Errc::InsufficientSamples:
    case Errc::EmptyValSplit:
      return true;
    default:
      return false;
  }
}

}  // namespace cmm
