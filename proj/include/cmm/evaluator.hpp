// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cmm/embedding_store.hpp"
#include "cmm/matrix.hpp"
#include "cmm/trainer.hpp"

namespace cmm {

/// Zero-shot logits: logit_scale · (v̂ · t_init).
Matrix clip_scores(const Matrix& v_hat, const Matrix& t_init, double logit_scale);

/// α·s_cmm + s_clip
Matrix fuse_logits(const Matrix& s_cmm, const Matrix& s_clip, double alpha);

/// Row-wise argmax; ties go to the lowest class index.
std::vector<std::uint32_t> predict(const Matrix& logits);

/// Percentage of rows whose argmax (lowest index on ties) equals the label.
double top1(const Matrix& logits, std::span<const std::uint32_t> labels);

/// Both score matrices for one split, already multiplied by the checkpoint's
/// logit scale, so fusing at any α is a cheap elementwise op.
struct ScoredSplit {
  Matrix s_cmm;
  Matrix s_clip;
  std::vector<std::uint32_t> labels;
};

ScoredSplit score_split(const Checkpoint& checkpoint, const Split& split);

/// Inclusive grid start, start+step, …, end (values rounded to 1e-10).
std::vector<double> alpha_grid(double start, double end, double step);

struct AlphaCandidate {
  double alpha = 0.0;
  double top1 = 0.0;
};

struct AlphaSearchResult {
  double best_alpha = 0.0;
  double best_top1 = 0.0;
  std::vector<AlphaCandidate> candidates;  ///< ascending α
};

/// Picks the α maximizing top-1 on the scored split; ties go to the smallest α.
AlphaSearchResult grid_search_alpha(const ScoredSplit& val, double start = 0.1, double end = 1.0,
                                    double step = 0.1, std::size_t threads = 1);

AlphaSearchResult grid_search_alpha(const Checkpoint& checkpoint, const Split& val,
                                    double start = 0.1, double end = 1.0, double step = 0.1,
                                    std::size_t threads = 1);

/// Agreement breakdown between zero-shot and fused predictions.
struct FlipCounts {
  std::size_t both_correct = 0;
  std::size_t clip_only = 0;  ///< zero-shot right, fused wrong
  std::size_t cmm_only = 0;   ///< fused right, zero-shot wrong
  std::size_t both_wrong_same = 0;
  std::size_t both_wrong_diff = 0;

  std::size_t total() const noexcept {
    return both_correct + clip_only + cmm_only + both_wrong_same + both_wrong_diff;
  }
};

/// correct_flip_rate = |clip wrong ∧ cmm right| / |clip wrong|
/// error_inconsistency_rate = |both wrong ∧ different predictions| / |clip wrong ∨ cmm wrong|
/// A rate is absent when its denominator is empty.
struct FlipStats {
  FlipCounts counts;
  std::optional<double> correct_flip_rate;
  std::optional<double> error_inconsistency_rate;
};

FlipStats flip_analysis(std::span<const std::uint32_t> clip_preds,
                        std::span<const std::uint32_t> cmm_preds,
                        std::span<const std::uint32_t> labels);

struct EvalReport {
  double top1 = 0.0;
  double zero_shot_top1 = 0.0;
  double alpha_used = 0.0;
  std::size_t samples = 0;
  std::vector<std::optional<double>> per_class;  ///< absent for classes with no samples
  FlipStats flips;
};

EvalReport evaluate(const Checkpoint& checkpoint, const Split& split, double alpha);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const AlphaSearchResult& result);
nlohmann::json to_json(const FlipStats& stats);

}  // namespace cmm
