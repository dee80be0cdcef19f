// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "cmm/embedding_store.hpp"
#include "cmm/error.hpp"
#include "cmm/evaluator.hpp"
#include "cmm/prototypes.hpp"
#include "oracles.hpp"

using namespace cmm;
using Catch::Matchers::WithinAbs;

namespace {

Checkpoint random_checkpoint(const EmbeddingCache& cache, std::uint64_t seed) {
  Checkpoint c;
  c.t_init = build_text_prototypes(cache).t_init;
  SplitMix64 rng(seed);
  c.t_ft = oracle::random_unit_columns(cache.dim, cache.num_classes(), rng);
  c.mapper = init_mapper(cache.dim, 0, rng.next());
  return c;
}

EmbeddingCache small_cache() {
  SynthConfig cfg;
  cfg.num_classes = 5;
  cfg.dim = 12;
  cfg.train_per_class = 2;
  cfg.val_per_class = 6;
  cfg.test_per_class = 9;
  cfg.seed = 2;
  return synth_generate(cfg);
}

ScoredSplit two_class(std::vector<std::pair<double, double>> clip, std::vector<std::uint32_t> labels) {
  ScoredSplit s;
  s.s_cmm = Matrix(clip.size(), 2);
  s.s_clip = Matrix(clip.size(), 2);
  for (std::size_t i = 0; i < clip.size(); ++i) {
    s.s_cmm(i, 0) = 1.0;
    s.s_clip(i, 0) = clip[i].first;
    s.s_clip(i, 1) = clip[i].second;
  }
  s.labels = std::move(labels);
  return s;
}

}  // namespace

TEST_CASE("alpha zero reproduces zero-shot exactly") {
  const auto cache = small_cache();
  SplitMix64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ckpt = random_checkpoint(cache, rng.next());
    const auto scored = score_split(ckpt, cache.test);
    CHECK(fuse_logits(scored.s_cmm, scored.s_clip, 0.0) == scored.s_clip);
    const auto report = evaluate(ckpt, cache.test, 0.0);
    CHECK(report.top1 == report.zero_shot_top1);
    CHECK(report.flips.counts.clip_only == 0);
    CHECK(report.flips.counts.cmm_only == 0);
  }
}

TEST_CASE("fusion is alpha times mapped scores plus zero-shot scores") {
  SplitMix64 rng(3);
  const Matrix a = oracle::random_matrix(3, 4, rng);
  const Matrix b = oracle::random_matrix(3, 4, rng);
  const Matrix f = fuse_logits(a, b, 0.7);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK_THAT(f.values()[i], WithinAbs(0.7 * a.values()[i] + b.values()[i], 1e-15));
  CHECK_THROWS_AS(fuse_logits(a, b, -0.1), Error);
  CHECK_THROWS_AS(fuse_logits(a, Matrix(2, 4), 0.5), Error);
}

TEST_CASE("predict breaks ties toward the lowest class") {
  const Matrix logits(2, 3, {1.0, 1.0, 0.0, 0.0, 2.0, 2.0});
  CHECK(predict(logits) == std::vector<std::uint32_t>{0, 1});
  const std::vector<std::uint32_t> labels = {0, 2};
  CHECK(top1(logits, labels) == 50.0);
}

TEST_CASE("the default alpha grid is exactly 0.1 through 1.0") {
  const auto grid = alpha_grid(0.1, 1.0, 0.1);
  REQUIRE(grid.size() == 10);
  const double want[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  for (std::size_t i = 0; i < 10; ++i) CHECK(grid[i] == want[i]);
  CHECK(alpha_grid(0.0, 0.0, 0.5) == std::vector<double>{0.0});
  CHECK_THROWS_AS(alpha_grid(0.5, 0.1, 0.1), Error);
  CHECK_THROWS_AS(alpha_grid(0.1, 1.0, 0.0), Error);
}

TEST_CASE("grid search finds a constructed interior optimum") {
  // Class-0 rows need alpha > 0.25; the class-1 row needs alpha < 0.35.
  const auto val = two_class({{0.0, 0.25}, {0.0, 0.25}, {0.0, 0.35}}, {0, 0, 1});
  for (std::size_t threads : {1u, 3u}) {
    const auto result = grid_search_alpha(val, 0.1, 1.0, 0.1, threads);
    CHECK(result.best_alpha == 0.3);
    CHECK(result.best_top1 == 100.0);
    REQUIRE(result.candidates.size() == 10);
    CHECK_THAT(result.candidates[1].top1, WithinAbs(100.0 / 3.0, 1e-12));
    CHECK_THAT(result.candidates[3].top1, WithinAbs(200.0 / 3.0, 1e-12));
  }
}

TEST_CASE("grid search keeps the smallest alpha on ties") {
  const auto val = two_class({{0.0, 0.05}}, {0});
  CHECK(grid_search_alpha(val).best_alpha == 0.1);
}

TEST_CASE("grid search rejects an empty validation split") {
  const auto cache = small_cache();
  const auto ckpt = random_checkpoint(cache, 1);
  try {
    grid_search_alpha(ckpt, Split{Matrix(0, cache.dim), {}, std::nullopt});
    FAIL("expected EmptyValSplit");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyValSplit);
  }
}

TEST_CASE("flip analysis counts each outcome") {
  const std::vector<std::uint32_t> labels = {0, 0, 0, 0, 0, 0};
  const std::vector<std::uint32_t> clip = {0, 0, 1, 1, 2, 1};
  const std::vector<std::uint32_t> cmm = {0, 1, 0, 1, 1, 0};
  const auto s = flip_analysis(clip, cmm, labels);
  CHECK(s.counts.both_correct == 1);
  CHECK(s.counts.clip_only == 1);
  CHECK(s.counts.cmm_only == 2);
  CHECK(s.counts.both_wrong_same == 1);
  CHECK(s.counts.both_wrong_diff == 1);
  CHECK(s.counts.total() == 6);
  REQUIRE(s.correct_flip_rate);
  CHECK_THAT(*s.correct_flip_rate, WithinAbs(2.0 / 4.0, 1e-15));
  REQUIRE(s.error_inconsistency_rate);
  CHECK_THAT(*s.error_inconsistency_rate, WithinAbs(1.0 / 5.0, 1e-15));
}

TEST_CASE("flip rates are absent when nothing is wrong") {
  const std::vector<std::uint32_t> labels = {1, 2};
  const auto s = flip_analysis(labels, labels, labels);
  CHECK_FALSE(s.correct_flip_rate);
  CHECK_FALSE(s.error_inconsistency_rate);
  const auto j = to_json(s);
  CHECK(j["correct_flip_rate"].is_null());
  const std::vector<std::uint32_t> short_preds = {1};
  CHECK_THROWS_AS(flip_analysis(short_preds, labels, labels), Error);
}

TEST_CASE("per-class accuracy is absent for classes without samples") {
  const auto cache = small_cache();
  const auto ckpt = random_checkpoint(cache, 4);
  Split only_zero;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < cache.test.count(); ++i)
    if (cache.test.labels[i] == 0) rows.push_back(i);
  only_zero.features = gather_rows(cache.test.features, rows);
  only_zero.labels.assign(rows.size(), 0);
  const auto report = evaluate(ckpt, only_zero, 0.5);
  CHECK(report.per_class[0].has_value());
  for (std::size_t k = 1; k < cache.num_classes(); ++k) CHECK_FALSE(report.per_class[k].has_value());
  CHECK(report.samples == rows.size());
  CHECK_THROWS_AS(evaluate(ckpt, Split{Matrix(0, cache.dim), {}, std::nullopt}, 0.5), Error);
}
