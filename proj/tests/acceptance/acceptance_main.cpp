// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "cmm/embedding_store.hpp"
#include "cmm/evaluator.hpp"
#include "cmm/gap_metrics.hpp"
#include "cmm/losses.hpp"
#include "cmm/optim.hpp"
#include "cmm/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cmm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  double worst_layer = 0.0;
  double worst_t = 0.0;
  double worst_loss_gap = 0.0;
  for (std::size_t dim : {8, 32})
    for (std::size_t batch : {1, 8})
      for (std::size_t depth : {0, 2, 3}) {
        const auto check = oracle::check_gradients({dim, batch, depth, 5, 11});
        worst_layer = std::max(worst_layer, check.max_layer_error);
        worst_t = std::max(worst_t, check.t_ft_error);
        worst_loss_gap = std::max(worst_loss_gap, check.loss_gap);
      }
  const double elapsed = seconds_since(start);
  const bool pass = worst_layer <= 1e-3 && worst_t <= 1e-3 && elapsed < 30.0;
  return {pass, fmt("12 cases, max rel err W %.2e, T_ft %.2e (limit 1e-3), loss gap %.1e, %.2fs (limit 30s)",
                    worst_layer, worst_t, worst_loss_gap, elapsed)};
}

Outcome triplet_oracle() {
  SplitMix64 rng(2024);
  std::size_t mismatches = 0;
  std::size_t ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t batch = 1 + rng.below(16);
    const std::size_t classes = 2 + rng.below(11);
    const std::size_t dim = 2 + rng.below(31);
    const double margin = 0.05 + 1.95 * rng.uniform();
    const Matrix anchors = oracle::random_unit_rows(batch, dim, rng);
    Matrix t_hat = oracle::random_unit_columns(dim, classes, rng);
    if (classes >= 3 && rng.below(5) == 0) {
      // Duplicate a column so hardest-negative ties must break toward the lower index.
      const std::size_t src = rng.below(classes);
      const std::size_t dst = rng.below(classes);
      t_hat.set_column(dst, t_hat.column(src));
      ++ties;
    }
    const auto labels = oracle::random_labels(batch, classes, rng);
    const auto got = triplet_loss(anchors, t_hat, labels, margin);
    const auto want = oracle::exhaustive_triplet(anchors, t_hat, labels, margin);
    if (got.loss != want.loss || got.hardest_negative != want.hardest) ++mismatches;
  }
  return {mismatches == 0,
          fmt("1000 instances (%zu with duplicated prototypes), %zu mismatches", ties, mismatches)};
}

GaussianStats make_gaussian(std::vector<double> mean, Matrix cov) {
  GaussianStats g;
  g.mean = std::move(mean);
  g.cov = std::move(cov);
  return g;
}

GaussianStats rotate(const GaussianStats& g, const Matrix& q) {
  std::vector<double> mean(g.mean.size(), 0.0);
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t j = 0; j < q.cols(); ++j) mean[i] += q(i, j) * g.mean[j];
  return make_gaussian(mean, oracle::naive_matmul(oracle::naive_matmul(q, g.cov), transpose(q)));
}

Outcome distance_oracles() {
  SplitMix64 rng(99);
  double kl_err = 0.0;
  double w2_err = 0.0;
  double self_w2 = 0.0;
  double rot_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.below(8);
    std::vector<double> mp(d), vp(d), mq(d), vq(d);
    for (std::size_t i = 0; i < d; ++i) {
      mp[i] = rng.normal();
      mq[i] = rng.normal();
      vp[i] = 0.1 + 2.0 * rng.uniform();
      vq[i] = 0.1 + 2.0 * rng.uniform();
    }
    Matrix cp(d, d), cq(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      cp(i, i) = vp[i];
      cq(i, i) = vq[i];
    }
    const auto p = make_gaussian(mp, cp);
    const auto q = make_gaussian(mq, cq);
    kl_err = std::max(kl_err, std::abs(kl_gaussian(p, q) - oracle::kl_diagonal(mp, vp, mq, vq)));
    w2_err = std::max(w2_err, std::abs(wasserstein2_gaussian(p, q) - oracle::w2_diagonal(mp, vp, mq, vq)));

    const auto full_p = make_gaussian(mp, oracle::random_spd(d, rng));
    const auto full_q = make_gaussian(mq, oracle::random_spd(d, rng));
    self_w2 = std::max(self_w2, wasserstein2_gaussian(full_p, full_p));
    const Matrix rot = oracle::random_rotation(d, rng);
    const auto rp = rotate(full_p, rot);
    const auto rq = rotate(full_q, rot);
    rot_err = std::max({rot_err, std::abs(kl_gaussian(rp, rq) - kl_gaussian(full_p, full_q)),
                        std::abs(wasserstein2_gaussian(rp, rq) - wasserstein2_gaussian(full_p, full_q))});
  }
  const bool pass = kl_err <= 1e-9 && w2_err <= 1e-6 && self_w2 == 0.0 && rot_err <= 1e-6;
  return {pass, fmt("200 trials: KL err %.1e (1e-9), W2 err %.1e (1e-6), W2(p,p) max %.1e, rotation err %.1e (1e-6)",
                    kl_err, w2_err, self_w2, rot_err)};
}

Outcome optimizer_schedule() {
  SplitMix64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    AdamWConfig config;
    config.weight_decay = trial % 2 == 0 ? 1e-4 : 0.05;
    oracle::ScalarAdam hand;
    hand.weight_decay = config.weight_decay;
    AdamWState state;
    double theta = rng.normal();
    double ref = theta;
    for (int step = 0; step < 200; ++step) {
      const double g = rng.normal() * (step % 7 == 0 ? 10.0 : 1.0);
      const double lr = 1e-3 * (1.0 + rng.uniform());
      adamw_step(config, state, std::span<double>(&theta, 1), std::span<const double>(&g, 1), lr);
      ref = hand.step(ref, g, lr);
      worst = std::max(worst, std::abs(theta - ref));
    }
  }
  Schedule schedule;
  schedule.total_steps = 16000;
  schedule.warmup_steps = 1600;
  const double at_warmup = lr_at(schedule, schedule.warmup_steps);
  const double at_total = lr_at(schedule, schedule.total_steps);
  const bool pass = worst <= 1e-12 && at_warmup == 1e-4 && at_total == 1e-5;
  return {pass, fmt("adamw vs hand recurrence max err %.1e (1e-12); lr_at(warmup)=%g %s 1e-4, lr_at(total)=%g %s 1e-5",
                    worst, at_warmup, at_warmup == 1e-4 ? "==" : "!=", at_total, at_total == 1e-5 ? "==" : "!=")};
}

// The synthetic scenario shared by the end-to-end and fusion criteria.
struct Scenario {
  EmbeddingCache cache;
  Checkpoint checkpoint;
  double train_seconds = 0.0;
};

SynthConfig scenario_synth() {
  SynthConfig s;
  s.num_classes = 8;
  s.dim = 64;
  s.gap_shift = 0.5;
  s.seed = 7;
  return s;
}

TrainConfig scenario_train() {
  TrainConfig t;
  t.shots = 16;
  t.seed = 1;
  t.total_steps = 2000;
  // The default 1e-4 peak rate is tuned for 16,000 steps; a 2,000-step run
  // uses a proportionally larger peak rate.
  t.lr = 2e-3;
  return t;
}

Scenario run_scenario() {
  Scenario s;
  s.cache = synth_generate(scenario_synth());
  const auto config = scenario_train();
  const auto task = sample_fewshot(s.cache, config.shots, config.seed, config.use_flip_rows);
  const auto start = Clock::now();
  s.checkpoint = train(s.cache, task, config).checkpoint;
  s.train_seconds = seconds_since(start);
  return s;
}

Outcome end_to_end(const Scenario& s) {
  const auto start = Clock::now();
  const auto search = grid_search_alpha(s.checkpoint, s.cache.val);
  const auto report = evaluate(s.checkpoint, s.cache.test, search.best_alpha);
  const auto gap = gap_report(s.checkpoint, s.cache.test);
  const double elapsed = s.train_seconds + seconds_since(start);
  const bool a = report.top1 >= 95.0;
  const bool b = report.top1 > report.zero_shot_top1;
  const bool c = gap.after.w2 <= 0.5 * gap.before.w2;
  const bool fast = elapsed < 60.0;
  return {a && b && c && fast,
          fmt("(a) fused top-1 %.2f%% (>= 95) %s; (b) zero-shot %.2f%% %s; (c) W2 %.4f -> %.4f, ratio %.3f (<= 0.5) "
              "%s; alpha %.1f; %.2fs (limit 60s)",
              report.top1, a ? "ok" : "FAIL", report.zero_shot_top1, b ? "ok" : "FAIL", gap.before.w2,
              gap.after.w2, gap.after.w2 / gap.before.w2, c ? "ok" : "FAIL", search.best_alpha, elapsed)};
}

Outcome fusion_identity(const Scenario& s) {
  std::size_t mismatches = 0;
  std::size_t samples = 0;
  for (const Split* split : {&s.cache.val, &s.cache.test}) {
    const auto scored = score_split(s.checkpoint, *split);
    const Matrix fused = fuse_logits(scored.s_cmm, scored.s_clip, 0.0);
    if (!(fused == scored.s_clip)) ++mismatches;
    const auto fused_preds = predict(fused);
    const auto clip_preds = predict(scored.s_clip);
    for (std::size_t i = 0; i < fused_preds.size(); ++i) mismatches += fused_preds[i] != clip_preds[i];
    const auto report = evaluate(s.checkpoint, *split, 0.0);
    if (report.top1 != report.zero_shot_top1) ++mismatches;
    samples += split->count();
  }
  return {mismatches == 0, fmt("%zu samples over val+test, %zu mismatches", samples, mismatches)};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cmm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), root).string();
    if (rel.ends_with(".timing.json")) continue;
    std::ifstream f(entry.path(), std::ios::binary);
    files[rel] = std::string(std::istreambuf_iterator<char>(f), {});
  }
  return files;
}

Outcome determinism(const fs::path& scratch) {
  std::vector<std::map<std::string, std::string>> runs;
  int failures = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = scratch / ("run" + std::to_string(run));
    fs::create_directories(dir);
    const std::string cache = (dir / "cache").string();
    const std::string ckpt = (dir / "model.ckpt").string();
    failures += cli({"synth", "--seed", "7", "--classes", "8", "--dim", "64", "--out", cache}) != 0;
    failures += cli({"train", "--cache", cache, "--shots", "16", "--seed", "1", "--steps", "2000", "--out",
                     ckpt}) != 0;
    failures += cli({"eval", "--cache", cache, "--checkpoint", ckpt, "--out", (dir / "eval.json").string()}) != 0;
    runs.push_back(snapshot(dir));
  }
  const bool same = runs[0] == runs[1];
  return {failures == 0 && same && !runs[0].empty(),
          fmt("%zu files per run, %d failed commands, outputs %s", runs[0].size(), failures,
              same ? "byte-identical" : "DIFFER")};
}

double per_step_seconds(std::size_t dim) {
  SynthConfig synth;
  synth.dim = dim;
  synth.val_per_class = 1;
  synth.test_per_class = 1;
  const auto cache = synth_generate(synth);
  TrainConfig config;
  config.total_steps = 300;
  const auto task = sample_fewshot(cache, config.shots, config.seed, config.use_flip_rows);
  double best = 1e300;
  for (int rep = 0; rep < 5; ++rep) {
    const auto start = Clock::now();
    train(cache, task, config);
    best = std::min(best, seconds_since(start) / static_cast<double>(config.total_steps));
  }
  return best;
}

Outcome complexity() {
  std::string detail;
  double worst = 0.0;
  for (std::size_t dim : {128, 256}) {
    const double small = per_step_seconds(dim);
    const double large = per_step_seconds(2 * dim);
    const double ratio = large / small;
    worst = std::max(worst, ratio);
    detail += fmt("d=%zu %.1fus -> d=%zu %.1fus (x%.2f); ", dim, small * 1e6, 2 * dim, large * 1e6, ratio);
  }
  detail += "limit x4.5";
  return {worst <= 4.5, detail};
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / ("cmm_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(scratch);

  const Scenario scenario = run_scenario();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-suite", gradient_suite},
      {"triplet-oracle", triplet_oracle},
      {"distance-oracles", distance_oracles},
      {"optimizer-schedule", optimizer_schedule},
      {"end-to-end-synthetic", [&] { return end_to_end(scenario); }},
      {"fusion-identity", [&] { return fusion_identity(scenario); }},
      {"determinism", [&] { return determinism(scratch); }},
      {"complexity-scaling", complexity},
  };

  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    failed += !outcome.pass;
    std::printf("[%s] %s: %s\n", outcome.pass ? "PASS" : "FAIL", name.c_str(), outcome.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch);
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
