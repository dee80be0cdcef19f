// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "blob_io.hpp"
#include "cmm/error.hpp"
#include "cmm/evaluator.hpp"
#include "cmm/losses.hpp"
#include "cmm/numerics.hpp"
#include "cmm/optim.hpp"
#include "cmm/prototypes.hpp"
#include "cmm/random.hpp"

namespace cmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

// Chain rule through column normalization t̂ = t/‖t‖.
void accumulate_through_column_norm(Matrix& grad_t, const Matrix& grad_t_hat, const Matrix& t_hat,
                                    std::span<const double> norms) {
  for (std::size_t c = 0; c < t_hat.cols(); ++c) {
    double along = 0.0;
    for (std::size_t r = 0; r < t_hat.rows(); ++r) along += grad_t_hat(r, c) * t_hat(r, c);
    for (std::size_t r = 0; r < t_hat.rows(); ++r)
      grad_t(r, c) += (grad_t_hat(r, c) - along * t_hat(r, c)) / norms[c];
  }
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["shots"] = c.shots;
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["total_steps"] = c.total_steps;
  j["alpha_train"] = c.alpha_train;
  j["margin"] = c.margin;
  j["temperature"] = c.temperature;
  j["depth"] = c.depth;
  j["lr"] = c.lr;
  j["lr_min"] = c.lr_min;
  j["weight_decay"] = c.weight_decay;
  j["warmup_steps"] = c.warmup_steps ? json(*c.warmup_steps) : json(nullptr);
  j["warmup_epochs"] = c.warmup_epochs;
  j["use_triplet"] = c.use_triplet;
  j["use_flip_rows"] = c.use_flip_rows;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.shots = detail::manifest_get<std::size_t>(j, "shots");
  c.seed = detail::manifest_get<std::size_t>(j, "seed");
  c.batch_size = detail::manifest_get<std::size_t>(j, "batch_size");
  c.total_steps = detail::manifest_get<std::size_t>(j, "total_steps");
  c.alpha_train = detail::manifest_get<double>(j, "alpha_train");
  c.margin = detail::manifest_get<double>(j, "margin");
  c.temperature = detail::manifest_get<double>(j, "temperature");
  c.depth = detail::manifest_get<std::size_t>(j, "depth");
  c.lr = detail::manifest_get<double>(j, "lr");
  c.lr_min = detail::manifest_get<double>(j, "lr_min");
  c.weight_decay = detail::manifest_get<double>(j, "weight_decay");
  if (auto it = j.find("warmup_steps"); it != j.end() && !it->is_null()) {
    c.warmup_steps = it->get<std::size_t>();
  }
  c.warmup_epochs = detail::manifest_get<std::size_t>(j, "warmup_epochs");
  c.use_triplet = detail::manifest_get<bool>(j, "use_triplet");
  c.use_flip_rows = detail::manifest_get<bool>(j, "use_flip_rows");
  return c;
}

}  // namespace

void validate_train_config(const TrainConfig& c) {
  if (c.batch_size == 0) throw Error(Errc::BadConfig, "batch_size must be at least 1");
  if (c.total_steps < 2) throw Error(Errc::BadConfig, "total_steps must be at least 2");
  if (!(c.temperature > 0.0)) throw Error(Errc::BadConfig, "temperature must be positive");
  if (!(c.margin > 0.0)) throw Error(Errc::BadConfig, "margin must be positive");
  if (!(c.alpha_train >= 0.0)) throw Error(Errc::BadConfig, "alpha_train must be non-negative");
  if (!(c.lr >= 0.0) || !(c.lr_min >= 0.0) || !(c.weight_decay >= 0.0)) {
    throw Error(Errc::BadConfig, "learning rates and weight decay must be non-negative");
  }
  if (c.depth == 1) throw Error(Errc::BadConfig, "depth must be 0 (linear) or at least 2");
}

BatchLoss batch_loss(MapperParams& mapper, const Matrix& t_ft, const Matrix& x, const Matrix& s_clip,
                     std::span<const std::uint32_t> labels, const TrainConfig& config) {
  const double scale = config.logit_scale();
  BatchLoss out;
  MapResult fwd = map_forward(mapper, x);
  const Matrix s_cmm = cmm_scores(fwd.output, t_ft);
  const Matrix logits = fuse_logits(scale * s_cmm, s_clip, config.alpha_train);
  const CrossEntropyResult ce = cross_entropy(logits, labels);
  out.ce = ce.loss;

  const double cmm_weight = config.alpha_train * scale;
  Matrix grad_v = matmul_nt(cmm_weight * ce.grad, t_ft);
  out.grad_t = matmul_tn(fwd.output, cmm_weight * ce.grad);
  if (config.use_triplet) {
    Matrix t_hat = t_ft;
    const auto norms = normalize_columns(t_hat);
    const TripletResult tri = triplet_loss(fwd.output, t_hat, labels, config.margin);
    out.triplet = tri.loss;
    grad_v = grad_v + tri.grad_anchors;
    accumulate_through_column_norm(out.grad_t, tri.grad_protos, t_hat, norms);
  }
  out.total = total_loss(out.ce, out.triplet);

  mapper.zero_grad();
  map_backward(mapper, fwd.tape, grad_v, /*want_input_grad=*/false);
  return out;
}

TrainResult train(const EmbeddingCache& cache, const FewShotTask& task, const TrainConfig& config) {
  validate_train_config(config);
  const std::size_t rows = task.train_features.rows();
  if (rows == 0) throw Error(Errc::EmptyBatch, "few-shot task has no training rows");
  if (task.train_features.cols() != cache.dim || task.num_classes != cache.num_classes()) {
    throw Error(Errc::DimMismatch, "task was not drawn from this cache");
  }

  const TextPrototypes protos = build_text_prototypes(cache);
  const double scale = config.logit_scale();

  Schedule schedule;
  schedule.total_steps = config.total_steps;
  schedule.warmup_steps = config.warmup_steps.value_or(
      warmup_steps_for_epochs(config.warmup_epochs, rows, config.batch_size, config.total_steps));
  schedule.lr_base = config.lr;
  schedule.lr_min = std::min(config.lr_min, config.lr);
  validate_schedule(schedule);

  AdamWConfig adam;
  adam.weight_decay = config.weight_decay;

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.config = config;
  ckpt.warmup_steps = schedule.warmup_steps;
  ckpt.mapper = init_mapper(cache.dim, config.depth, derive_seed(config.seed, kInitStream));
  ckpt.t_init = protos.t_init;
  ckpt.t_ft = protos.t_ft;
  MapperParams& mapper = ckpt.mapper;
  Matrix& t_ft = ckpt.t_ft;

  // Features and t_init are frozen, so zero-shot logits are computed once.
  const Matrix s_clip_all = clip_scores(task.train_features, ckpt.t_init, scale);

  std::vector<AdamWState> layer_states(mapper.num_layers());
  AdamWState proto_state;

  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 shuffle_rng(derive_seed(config.seed, kShuffleStream));
  std::size_t cursor = rows;

  result.losses.reserve(config.total_steps);
  std::vector<std::size_t> batch;
  std::vector<std::uint32_t> labels;
  for (std::size_t step = 0; step < config.total_steps; ++step) {
    if (cursor >= rows) {
      shuffle_rng.shuffle(std::span(order));
      cursor = 0;
    }
    const std::size_t take = std::min(config.batch_size, rows - cursor);
    batch.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                 order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
    labels.clear();
    for (std::size_t r : batch) labels.push_back(task.train_labels[r]);

    const Matrix x = gather_rows(task.train_features, batch);
    const Matrix s_clip = gather_rows(s_clip_all, batch);

    const BatchLoss batch_result = batch_loss(mapper, t_ft, x, s_clip, labels, config);
    if (!std::isfinite(batch_result.total)) {
      throw Error(Errc::NonFiniteLoss, "loss became non-finite at step " + std::to_string(step));
    }
    result.losses.push_back(batch_result.total);

    const double lr = lr_at(schedule, step + 1);
    for (std::size_t l = 0; l < mapper.num_layers(); ++l) {
      adamw_step(adam, layer_states[l], mapper.layers[l].values(), mapper.grads[l].values(), lr);
    }
    adamw_step(adam, proto_state, t_ft.values(), batch_result.grad_t.values(), lr);
  }
  mapper.zero_grad();
  ckpt.final_loss = result.losses.back();
  return result;
}

void write_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());

  json m;
  m["format"] = kCheckpointFormat;
  m["version"] = kCheckpointVersion;
  m["dim"] = ckpt.dim();
  m["num_classes"] = ckpt.num_classes();
  m["depth"] = ckpt.mapper.depth;
  m["warmup_steps"] = ckpt.warmup_steps;
  m["final_loss"] = ckpt.final_loss;
  m["config"] = config_to_json(ckpt.config);
  json layers = json::array();
  for (std::size_t l = 0; l < ckpt.mapper.num_layers(); ++l) {
    const std::string name = "w" + std::to_string(l) + ".f64";
    detail::write_f64(dir / name, ckpt.mapper.layers[l]);
    layers.push_back(name);
  }
  m["layers"] = layers;
  m["t_init"] = "t_init.f64";
  m["t_ft"] = "t_ft.f64";
  detail::write_f64(dir / "t_init.f64", ckpt.t_init);
  detail::write_f64(dir / "t_ft.f64", ckpt.t_ft);
  detail::write_manifest(dir / "manifest.json", m);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(Errc::MissingFile, manifest_path.string());
  const json m = detail::read_manifest(manifest_path);
  if (m.value("format", std::string{}) != kCheckpointFormat) {
    throw Error(Errc::BadMagic, manifest_path.string() + " is not a CMMC checkpoint manifest");
  }
  if (detail::manifest_get<int>(m, "version") != kCheckpointVersion) {
    throw Error(Errc::BadVersion, "unsupported checkpoint version " + m["version"].dump());
  }

  Checkpoint ckpt;
  const auto dim = detail::manifest_get<std::size_t>(m, "dim");
  const auto classes = detail::manifest_get<std::size_t>(m, "num_classes");
  ckpt.config = config_from_json(m.at("config"));
  ckpt.warmup_steps = detail::manifest_get<std::size_t>(m, "warmup_steps");
  ckpt.final_loss = detail::manifest_get<double>(m, "final_loss");
  ckpt.mapper.dim = dim;
  ckpt.mapper.depth = detail::manifest_get<std::size_t>(m, "depth");
  const auto layer_files = detail::manifest_get<std::vector<std::string>>(m, "layers");
  const std::size_t expected_layers = ckpt.mapper.depth == 0 ? 1 : ckpt.mapper.depth;
  if (layer_files.size() != expected_layers) {
    throw Error(Errc::DimensionMismatch, "checkpoint depth disagrees with its layer list");
  }
  for (const auto& name : layer_files) {
    ckpt.mapper.layers.push_back(detail::read_f64(dir / name, dim, dim));
    ckpt.mapper.grads.emplace_back(dim, dim);
  }
  ckpt.t_init = detail::read_f64(dir / detail::manifest_get<std::string>(m, "t_init"), dim, classes);
  ckpt.t_ft = detail::read_f64(dir / detail::manifest_get<std::string>(m, "t_ft"), dim, classes);
  return ckpt;
}

}  // namespace cmm
