// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmm/embedding_store.hpp"
#include "cmm/error.hpp"
#include "cmm/evaluator.hpp"
#include "cmm/gap_metrics.hpp"
#include "cmm/parallel.hpp"
#include "cmm/prototypes.hpp"
#include "cmm/trainer.hpp"

namespace cmm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Reads a flat JSON object whose keys are long flag names (dashes or
// underscores) and routes them to the subcommand that was selected.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App& root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json doc;
    try {
      doc = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConfigError(std::string("--config: malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConfigError("--config: top level must be a JSON object");

    std::vector<std::string> parents;
    const CLI::App* target = &root_;
    for (const auto* sub : root_.get_subcommands()) {
      parents.push_back(sub->get_name());
      target = sub;
    }

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (item.name == "config" || target->get_option_no_throw("--" + item.name) == nullptr) {
        throw CLI::ConfigError("--config: unknown key '" + key + "' for " + target->get_name());
      }
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar_text(key, v));
      } else {
        item.inputs.push_back(scalar_text(key, value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar_text(const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConfigError("--config: value of '" + key + "' must be a string, number, boolean or array");
  }

  const CLI::App& root_;
};

const std::vector<std::string> kSplits = {"train", "val", "test"};

const Split& pick_split(const EmbeddingCache& cache, const std::string& name) {
  if (name == "train") return cache.train;
  if (name == "val") return cache.val;
  return cache.test;
}

void require_compatible(const Checkpoint& ckpt, const EmbeddingCache& cache) {
  if (ckpt.dim() != cache.dim || ckpt.num_classes() != cache.num_classes()) {
    throw Error(Errc::DimensionMismatch,
                "checkpoint is " + std::to_string(ckpt.dim()) + "-d with " +
                    std::to_string(ckpt.num_classes()) + " classes; cache is " +
                    std::to_string(cache.dim) + "-d with " + std::to_string(cache.num_classes()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

struct AlphaRange {
  double start = 0.1;
  double end = 1.0;
  double step = 0.1;
};

void add_alpha_range(CLI::App* sub, AlphaRange& range) {
  sub->add_option("--alpha-start", range.start, "First fusion coefficient of the search grid")
      ->capture_default_str();
  sub->add_option("--alpha-end", range.end, "Last fusion coefficient of the search grid")
      ->capture_default_str();
  sub->add_option("--alpha-step", range.step, "Grid spacing")->capture_default_str();
}

struct TrainFlags {
  std::string cache;
  TrainConfig config;
  CLI::Option* warmup_opt = nullptr;
  std::size_t warmup_steps = 0;
  bool no_triplet = false;
  bool no_flip_rows = false;

  TrainConfig resolved() const {
    TrainConfig c = config;
    if (warmup_opt->count() > 0) c.warmup_steps = warmup_steps;
    c.use_triplet = !no_triplet;
    c.use_flip_rows = !no_flip_rows;
    return c;
  }
};

void add_train_flags(CLI::App* sub, TrainFlags& f, bool with_depth) {
  auto& c = f.config;
  sub->add_option("--cache", f.cache, "Embedding cache directory")->required();
  sub->add_option("--shots", c.shots, "Training images per class")->capture_default_str();
  sub->add_option("--seed", c.seed, "Seed for shot sampling, initialization and shuffling")
      ->capture_default_str();
  sub->add_option("--batch", c.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--steps", c.total_steps, "Training iterations")->capture_default_str();
  sub->add_option("--alpha-train", c.alpha_train, "Weight of mapped scores in training logits")
      ->capture_default_str();
  sub->add_option("--margin", c.margin, "Triplet margin")->capture_default_str();
  sub->add_option("--temperature", c.temperature, "Logit temperature")->capture_default_str();
  if (with_depth) {
    sub->add_option("--depth", c.depth, "Mapper depth (0 = single residual linear layer)")
        ->capture_default_str();
  }
  sub->add_option("--lr", c.lr, "Peak learning rate")->capture_default_str();
  sub->add_option("--lr-min", c.lr_min, "Final learning rate of the cosine schedule")
      ->capture_default_str();
  sub->add_option("--weight-decay", c.weight_decay, "AdamW decoupled weight decay")
      ->capture_default_str();
  f.warmup_opt = sub->add_option("--warmup-steps", f.warmup_steps, "Explicit warmup length");
  sub->add_option("--warmup-epochs", c.warmup_epochs, "Warmup length in epochs when steps are not given")
      ->capture_default_str();
  sub->add_flag("--no-triplet", f.no_triplet, "Train with cross-entropy only");
  sub->add_flag("--no-flip-rows", f.no_flip_rows, "Do not add flipped copies of the shots");
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Wall-clock never enters a report body; it goes next to the output instead.
void write_timing(const std::string& out, const std::string& subcommand, double seconds) {
  if (out.empty()) return;
  json j{{"subcommand", subcommand}, {"seconds", seconds}, {"threads", worker_threads()}};
  write_text(fs::path(out + ".timing.json"), pretty(j));
}

void emit(const std::string& out_path, const std::string& text, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_text(out_path, text);
  }
}

struct Resolved {
  double alpha = 0.0;
  std::optional<AlphaSearchResult> search;
};

// Uses the given α, otherwise grid-searches it on the validation split.
Resolved resolve_alpha(const Checkpoint& ckpt, const EmbeddingCache& cache, CLI::Option* alpha_opt,
                       double alpha, const AlphaRange& range) {
  if (alpha_opt->count() > 0) return {alpha, std::nullopt};
  if (cache.val.count() == 0) {
    throw Error(Errc::EmptyValSplit, "cache has no validation split; pass --alpha");
  }
  auto search = grid_search_alpha(ckpt, cache.val, range.start, range.end, range.step, worker_threads());
  return {search.best_alpha, search};
}

json alpha_json(const Resolved& r) {
  json j{{"alpha", r.alpha}, {"source", r.search ? "validation search" : "flag"}};
  if (r.search) j["search"] = to_json(*r.search);
  return j;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-modal mapping for few-shot classification over cached embeddings", "cmm"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "JSON file whose keys mirror the subcommand's long flags");
  app.config_formatter(std::make_shared<JsonConfig>(app));

  std::string subcommand;
  std::function<void()> action;
  std::string out_path;

  // synth
  SynthConfig synth;
  bool synth_no_flips = false;
  auto* s = app.add_subcommand("synth", "Write a synthetic embedding cache");
  s->add_option("--out", out_path, "Output cache directory")->required();
  s->add_option("--seed", synth.seed, "Sampling seed")->capture_default_str();
  s->add_option("--classes", synth.num_classes, "Number of classes")->capture_default_str();
  s->add_option("--templates", synth.num_templates, "Text templates per class")->capture_default_str();
  s->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
  s->add_option("--train-per-class", synth.train_per_class, "Train images per class")
      ->capture_default_str();
  s->add_option("--val-per-class", synth.val_per_class, "Validation images per class (max 200)")
      ->capture_default_str();
  s->add_option("--test-per-class", synth.test_per_class, "Test images per class")->capture_default_str();
  s->add_option("--separation", synth.class_separation, "Class-mean separation in [0, 1]")
      ->capture_default_str();
  s->add_option("--noise", synth.noise_sigma, "Per-coordinate image noise")->capture_default_str();
  s->add_option("--flip-noise", synth.flip_sigma, "Noise added to flipped copies")->capture_default_str();
  s->add_flag("--no-flips", synth_no_flips, "Omit flipped training copies");
  s->add_option("--gap-shift", synth.gap_shift, "Length of the common text offset")->capture_default_str();
  s->add_option("--rotation-angle", synth.rotation_angle, "Text rotation angle in radians")
      ->capture_default_str();
  s->add_option("--rotation-seed", synth.rotation_seed, "Seed of the text rotation")
      ->capture_default_str();
  s->add_option("--template-noise", synth.template_sigma, "Per-template text noise")
      ->capture_default_str();
  s->callback([&] {
    subcommand = "synth";
    action = [&] {
      synth.with_flips = !synth_no_flips;
      write_cache(synth_generate(synth), out_path);
    };
  });

  // train
  TrainFlags train_flags;
  std::string loss_log;
  auto* t = app.add_subcommand("train", "Train a mapper and prototypes; write a checkpoint directory");
  add_train_flags(t, train_flags, true);
  t->add_option("--out", out_path, "Output checkpoint directory")->required();
  t->add_option("--loss-log", loss_log, "Optional CSV of per-step loss");
  t->callback([&] {
    subcommand = "train";
    action = [&] {
      const auto config = train_flags.resolved();
      validate_train_config(config);
      const auto cache = load_cache(train_flags.cache);
      const auto task = sample_fewshot(cache, config.shots, config.seed, config.use_flip_rows);
      const auto result = train(cache, task, config);
      write_checkpoint(result.checkpoint, out_path);
      if (!loss_log.empty()) {
        std::string csv = "step,loss\n";
        char line[64];
        for (std::size_t i = 0; i < result.losses.size(); ++i) {
          std::snprintf(line, sizeof line, "%zu,%.17g\n", i + 1, result.losses[i]);
          csv += line;
        }
        write_text(loss_log, csv);
      }
    };
  });

  // eval
  std::string cache_path;
  std::string ckpt_path;
  std::string split_name = "test";
  double alpha = 0.0;
  AlphaRange range;
  auto* e = app.add_subcommand("eval", "Top-1 of a checkpoint on one split");
  e->add_option("--cache", cache_path, "Embedding cache directory")->required();
  e->add_option("--checkpoint", ckpt_path, "Checkpoint directory")->required();
  e->add_option("--split", split_name, "Split to score")->check(CLI::IsMember(kSplits))->capture_default_str();
  auto* eval_alpha = e->add_option("--alpha", alpha, "Fusion coefficient; searched on val when omitted")
                         ->check(CLI::NonNegativeNumber);
  add_alpha_range(e, range);
  e->add_option("--out", out_path, "Report file (stdout when omitted)");
  e->callback([&] {
    subcommand = "eval";
    action = [&] {
      const auto cache = load_cache(cache_path);
      const auto ckpt = load_checkpoint(ckpt_path);
      require_compatible(ckpt, cache);
      const auto a = resolve_alpha(ckpt, cache, eval_alpha, alpha, range);
      json j = to_json(evaluate(ckpt, pick_split(cache, split_name), a.alpha));
      j["split"] = split_name;
      j["alpha"] = alpha_json(a);
      emit(out_path, pretty(j), out);
    };
  });

  // search-alpha
  std::string search_split = "val";
  auto* sa = app.add_subcommand("search-alpha", "Grid-search the fusion coefficient");
  sa->add_option("--cache", cache_path, "Embedding cache directory")->required();
  sa->add_option("--checkpoint", ckpt_path, "Checkpoint directory")->required();
  sa->add_option("--split", search_split, "Split to search on")->check(CLI::IsMember(kSplits))
      ->capture_default_str();
  add_alpha_range(sa, range);
  sa->add_option("--out", out_path, "Report file (stdout when omitted)");
  sa->callback([&] {
    subcommand = "search-alpha";
    action = [&] {
      const auto cache = load_cache(cache_path);
      const auto ckpt = load_checkpoint(ckpt_path);
      require_compatible(ckpt, cache);
      const Split& split = pick_split(cache, search_split);
      if (split.count() == 0) throw Error(Errc::EmptyValSplit, search_split + " split is empty");
      json j = to_json(grid_search_alpha(ckpt, split, range.start, range.end, range.step, worker_threads()));
      j["split"] = search_split;
      emit(out_path, pretty(j), out);
    };
  });

  // gap
  auto* g = app.add_subcommand("gap", "Modality-gap metrics before and after a checkpoint");
  g->add_option("--cache", cache_path, "Embedding cache directory")->required();
  g->add_option("--checkpoint", ckpt_path, "Checkpoint directory")->required();
  g->add_option("--split", split_name, "Image population")->check(CLI::IsMember(kSplits))->capture_default_str();
  g->add_option("--out", out_path, "Report file (stdout when omitted)");
  g->callback([&] {
    subcommand = "gap";
    action = [&] {
      const auto cache = load_cache(cache_path);
      const auto ckpt = load_checkpoint(ckpt_path);
      require_compatible(ckpt, cache);
      json j = to_json(gap_report(ckpt, pick_split(cache, split_name)));
      j["split"] = split_name;
      emit(out_path, pretty(j), out);
    };
  });

  // flips
  auto* f = app.add_subcommand("flips", "Agreement between zero-shot and fused predictions");
  f->add_option("--cache", cache_path, "Embedding cache directory")->required();
  f->add_option("--checkpoint", ckpt_path, "Checkpoint directory")->required();
  f->add_option("--split", split_name, "Split to score")->check(CLI::IsMember(kSplits))->capture_default_str();
  auto* flips_alpha = f->add_option("--alpha", alpha, "Fusion coefficient; searched on val when omitted")
                          ->check(CLI::NonNegativeNumber);
  add_alpha_range(f, range);
  f->add_option("--out", out_path, "Report file (stdout when omitted)");
  f->callback([&] {
    subcommand = "flips";
    action = [&] {
      const auto cache = load_cache(cache_path);
      const auto ckpt = load_checkpoint(ckpt_path);
      require_compatible(ckpt, cache);
      const auto a = resolve_alpha(ckpt, cache, flips_alpha, alpha, range);
      const auto report = evaluate(ckpt, pick_split(cache, split_name), a.alpha);
      json j = to_json(report.flips);
      j["split"] = split_name;
      j["alpha"] = alpha_json(a);
      j["samples"] = report.samples;
      j["top1"] = report.top1;
      j["zero_shot_top1"] = report.zero_shot_top1;
      emit(out_path, pretty(j), out);
    };
  });

  // ablate-depth
  TrainFlags ablate_flags;
  std::vector<std::size_t> depths = {0, 2, 3, 4, 5};
  auto* ad = app.add_subcommand("ablate-depth", "Train and evaluate one checkpoint per mapper depth");
  add_train_flags(ad, ablate_flags, false);
  ad->add_option("--depths", depths, "Depths to compare")->capture_default_str();
  ad->add_option("--split", split_name, "Split to score")->check(CLI::IsMember(kSplits))->capture_default_str();
  auto* ablate_alpha = ad->add_option("--alpha", alpha, "Fusion coefficient; searched on val when omitted")
                           ->check(CLI::NonNegativeNumber);
  add_alpha_range(ad, range);
  ad->add_option("--out", out_path, "Report file (stdout when omitted)");
  ad->callback([&] {
    subcommand = "ablate-depth";
    action = [&] {
      std::sort(depths.begin(), depths.end());
      depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
      auto base = ablate_flags.resolved();
      for (auto depth : depths) {
        base.depth = depth;
        validate_train_config(base);
      }
      const auto cache = load_cache(ablate_flags.cache);
      const auto task = sample_fewshot(cache, base.shots, base.seed, base.use_flip_rows);
      const Split& split = pick_split(cache, split_name);
      std::vector<json> rows(depths.size());
      parallel_for(depths.size(), worker_threads(), [&](std::size_t i) {
        TrainConfig config = base;
        config.depth = depths[i];
        const auto result = train(cache, task, config);
        const auto a = resolve_alpha(result.checkpoint, cache, ablate_alpha, alpha, range);
        const auto report = evaluate(result.checkpoint, split, a.alpha);
        rows[i] = {{"depth", depths[i]},
                   {"top1", report.top1},
                   {"zero_shot_top1", report.zero_shot_top1},
                   {"alpha", a.alpha},
                   {"final_loss", result.checkpoint.final_loss}};
      });
      json j{{"split", split_name}, {"rows", rows}};
      emit(out_path, pretty(j), out);
    };
  });

  // export-proj
  auto* ep = app.add_subcommand("export-proj", "PCA-2D coordinates of images and prototypes as CSV");
  ep->add_option("--cache", cache_path, "Embedding cache directory")->required();
  ep->add_option("--checkpoint", ckpt_path, "Checkpoint directory; adds the mapped stage");
  ep->add_option("--split", split_name, "Image population")->check(CLI::IsMember(kSplits))->capture_default_str();
  ep->add_option("--out", out_path, "CSV file (stdout when omitted)");
  ep->callback([&] {
    subcommand = "export-proj";
    action = [&] {
      const auto cache = load_cache(cache_path);
      const Split& split = pick_split(cache, split_name);
      std::ostringstream csv;
      csv << kProjectionCsvHeader;
      if (ckpt_path.empty()) {
        write_projection_csv(csv, "before", {split.features, build_text_prototypes(cache).t_init},
                             split.labels);
      } else {
        const auto ckpt = load_checkpoint(ckpt_path);
        require_compatible(ckpt, cache);
        write_projection_csv(csv, "before", before_populations(ckpt, split), split.labels);
        write_projection_csv(csv, "after", after_populations(ckpt, split), split.labels);
      }
      emit(out_path, csv.str(), out);
    };
  });

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  }

  try {
    Timer timer;
    action();
    write_timing(out_path, subcommand, timer.seconds());
    return kExitOk;
  } catch (const Error& e) {
    err << "cmm " << subcommand << ": " << e.what() << "\n";
    return is_validation_error(e.code()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "cmm " << subcommand << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace cmm::cli
