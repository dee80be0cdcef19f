// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/evaluator.hpp"

#include <cmath>
#include <string>

#include "cmm/error.hpp"
#include "cmm/losses.hpp"
#include "cmm/parallel.hpp"

namespace cmm {

using nlohmann::json;

namespace {

void require_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::DimMismatch, "score matrices have different shapes");
  }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Matrix clip_scores(const Matrix& v_hat, const Matrix& t_init, double logit_scale) {
  if (v_hat.cols() != t_init.rows()) {
    throw Error(Errc::DimMismatch, "feature dim " + std::to_string(v_hat.cols()) +
                                       " vs prototype dim " + std::to_string(t_init.rows()));
  }
  return logit_scale * matmul(v_hat, t_init);
}

Matrix fuse_logits(const Matrix& s_cmm, const Matrix& s_clip, double alpha) {
  require_same_shape(s_cmm, s_clip);
  if (!(alpha >= 0.0)) throw Error(Errc::BadConfig, "fusion coefficient must be non-negative");
  Matrix out = s_clip;
  auto o = out.values();
  auto a = s_cmm.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * a[i] + o[i];
  return out;
}

std::vector<std::uint32_t> predict(const Matrix& logits) {
  std::vector<std::uint32_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    out[r] = static_cast<std::uint32_t>(best);
  }
  return out;
}

double top1(const Matrix& logits, std::span<const std::uint32_t> labels) {
  if (logits.rows() == 0) throw Error(Errc::EmptyBatch, "top-1 of an empty batch");
  if (labels.size() != logits.rows()) throw Error(Errc::DimMismatch, "label count differs from rows");
  const auto preds = predict(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.size());
}

ScoredSplit score_split(const Checkpoint& ckpt, const Split& split) {
  ScoredSplit out;
  out.labels = split.labels;
  if (split.count() == 0) {
    out.s_cmm = Matrix(0, ckpt.num_classes());
    out.s_clip = Matrix(0, ckpt.num_classes());
    return out;
  }
  const double scale = ckpt.logit_scale();
  out.s_clip = clip_scores(split.features, ckpt.t_init, scale);
  out.s_cmm = scale * cmm_scores(map_apply(ckpt.mapper, split.features), ckpt.t_ft);
  return out;
}

std::vector<double> alpha_grid(double start, double end, double step) {
  if (!(step > 0.0) || !(start >= 0.0) || !(end >= start)) {
    throw Error(Errc::BadConfig, "alpha range needs 0 <= start <= end and step > 0");
  }
  const auto count = static_cast<std::size_t>(std::floor((end - start) / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = std::round((start + static_cast<double>(i) * step) * 1e10) / 1e10;
  }
  return grid;
}

AlphaSearchResult grid_search_alpha(const ScoredSplit& val, double start, double end, double step,
                                    std::size_t threads) {
  if (val.labels.empty()) throw Error(Errc::EmptyValSplit, "validation split is empty");
  const auto grid = alpha_grid(start, end, step);
  AlphaSearchResult result;
  result.candidates.resize(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    result.candidates[i] = {grid[i], top1(fuse_logits(val.s_cmm, val.s_clip, grid[i]), val.labels)};
  });
  result.best_alpha = result.candidates.front().alpha;
  result.best_top1 = result.candidates.front().top1;
  for (const auto& c : result.candidates) {
    if (c.top1 > result.best_top1) {
      result.best_alpha = c.alpha;
      result.best_top1 = c.top1;
    }
  }
  return result;
}

AlphaSearchResult grid_search_alpha(const Checkpoint& checkpoint, const Split& val, double start,
                                    double end, double step, std::size_t threads) {
  if (val.count() == 0) throw Error(Errc::EmptyValSplit, "validation split is empty");
  return grid_search_alpha(score_split(checkpoint, val), start, end, step, threads);
}

FlipStats flip_analysis(std::span<const std::uint32_t> clip_preds,
                        std::span<const std::uint32_t> cmm_preds,
                        std::span<const std::uint32_t> labels) {
  if (clip_preds.size() != labels.size() || cmm_preds.size() != labels.size()) {
    throw Error(Errc::DimMismatch, "prediction vectors and labels differ in length");
  }
  FlipStats stats;
  FlipCounts& c = stats.counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool clip_ok = clip_preds[i] == labels[i];
    const bool cmm_ok = cmm_preds[i] == labels[i];
    if (clip_ok && cmm_ok) {
      ++c.both_correct;
    } else if (clip_ok) {
      ++c.clip_only;
    } else if (cmm_ok) {
      ++c.cmm_only;
    } else if (clip_preds[i] == cmm_preds[i]) {
      ++c.both_wrong_same;
    } else {
      ++c.both_wrong_diff;
    }
  }
  const std::size_t clip_wrong = c.cmm_only + c.both_wrong_same + c.both_wrong_diff;
  const std::size_t any_wrong = clip_wrong + c.clip_only;
  if (clip_wrong > 0) {
    stats.correct_flip_rate = static_cast<double>(c.cmm_only) / static_cast<double>(clip_wrong);
  }
  if (any_wrong > 0) {
    stats.error_inconsistency_rate =
        static_cast<double>(c.both_wrong_diff) / static_cast<double>(any_wrong);
  }
  return stats;
}

EvalReport evaluate(const Checkpoint& checkpoint, const Split& split, double alpha) {
  if (split.count() == 0) throw Error(Errc::EmptyBatch, "cannot evaluate an empty split");
  const ScoredSplit scored = score_split(checkpoint, split);
  const Matrix fused = fuse_logits(scored.s_cmm, scored.s_clip, alpha);
  const auto fused_preds = predict(fused);
  const auto clip_preds = predict(scored.s_clip);

  EvalReport report;
  report.alpha_used = alpha;
  report.samples = split.count();
  report.top1 = top1(fused, split.labels);
  report.zero_shot_top1 = top1(scored.s_clip, split.labels);
  report.flips = flip_analysis(clip_preds, fused_preds, split.labels);

  const std::size_t classes = checkpoint.num_classes();
  std::vector<std::size_t> seen(classes, 0);
  std::vector<std::size_t> hit(classes, 0);
  for (std::size_t i = 0; i < split.count(); ++i) {
    ++seen[split.labels[i]];
    hit[split.labels[i]] += fused_preds[i] == split.labels[i];
  }
  report.per_class.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    if (seen[k] > 0) {
      report.per_class[k] = 100.0 * static_cast<double>(hit[k]) / static_cast<double>(seen[k]);
    }
  }
  return report;
}

json to_json(const FlipStats& stats) {
  json j;
  j["convention"] = {
      {"correct_flip_rate", "|clip wrong and cmm right| / |clip wrong|"},
      {"error_inconsistency_rate",
       "|both wrong with different predictions| / |clip wrong or cmm wrong|"}};
  j["counts"] = {{"both_correct", stats.counts.both_correct},
                 {"clip_only", stats.counts.clip_only},
                 {"cmm_only", stats.counts.cmm_only},
                 {"both_wrong_same", stats.counts.both_wrong_same},
                 {"both_wrong_diff", stats.counts.both_wrong_diff}};
  j["correct_flip_rate"] = optional_number(stats.correct_flip_rate);
  j["error_inconsistency_rate"] = optional_number(stats.error_inconsistency_rate);
  return j;
}

json to_json(const EvalReport& report) {
  json j;
  j["top1"] = report.top1;
  j["zero_shot_top1"] = report.zero_shot_top1;
  j["alpha_used"] = report.alpha_used;
  j["samples"] = report.samples;
  json per_class = json::array();
  for (const auto& v : report.per_class) per_class.push_back(optional_number(v));
  j["per_class"] = per_class;
  j["flips"] = to_json(report.flips);
  return j;
}

json to_json(const AlphaSearchResult& result) {
  json j;
  j["best_alpha"] = result.best_alpha;
  j["best_top1"] = result.best_top1;
  json table = json::array();
  for (const auto& c : result.candidates) table.push_back({{"alpha", c.alpha}, {"top1", c.top1}});
  j["candidates"] = table;
  return j;
}

}  // namespace cmm
