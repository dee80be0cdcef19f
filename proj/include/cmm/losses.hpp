// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cmm/matrix.hpp"

namespace cmm {

struct LossConfig {
  /// Softmax temperature; the pretrained CLIP value is 0.01.
  double temperature = 0.01;
  double margin = 1.0;
  /// Multiplier applied to cosine scores before cross-entropy (1/temperature).
  double logit_scale = 100.0;
};

/// v̂′ · T for v̂′ [B × d] and T [d × N].
Matrix cmm_scores(const Matrix& v_prime_hat, const Matrix& t_ft);

/// Row-wise softmax of scores/τ, computed with max subtraction.
Matrix softmax_probs(const Matrix& scores, double tau);

struct TripletResult {
  double loss = 0.0;
  std::vector<double> per_sample;
  /// Index of the nearest wrong-class prototype per sample (lowest index on ties).
  std::vector<std::size_t> hardest_negative;
  Matrix grad_anchors;  ///< [B × d]
  Matrix grad_protos;   ///< [d × N]
};

/// Batch-mean hinge [D_pos − D_neg + margin]_+ under cosine distance
/// 1 − aᵀt̂, mining the hardest negative over all wrong classes.
TripletResult triplet_loss(const Matrix& anchors, const Matrix& t_hat,
                           std::span<const std::uint32_t> labels, double margin);

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix grad;  ///< (softmax − onehot)/B
};

CrossEntropyResult cross_entropy(const Matrix& logits, std::span<const std::uint32_t> labels);

inline double total_loss(double ce, double triplet) noexcept { return ce + triplet; }

/// Mean InfoNCE over paired rows with cosine similarity; a diagnostic that is
/// never optimized.
double contrastive_diagnostic(const Matrix& v_hat, const Matrix& t_hat, double tau);

}  // namespace cmm
