// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cmm/embedding_store.hpp"
#include "cmm/mapper.hpp"
#include "cmm/matrix.hpp"

namespace cmm {

struct TrainConfig {
  std::size_t shots = 16;
  std::uint64_t seed = 1;
  std::size_t batch_size = 8;
  std::size_t total_steps = 16000;
  /// Weight on the mapped scores inside the training logits.
  double alpha_train = 1.0;
  double margin = 1.0;
  /// CLIP temperature; training and evaluation scale cosine scores by 1/temperature.
  double temperature = 0.01;
  std::size_t depth = 0;
  double lr = 1e-4;
  double lr_min = 1e-5;
  double weight_decay = 1e-4;
  /// Explicit warmup length; when absent it is derived from warmup_epochs.
  std::optional<std::size_t> warmup_steps;
  std::size_t warmup_epochs = 50;
  bool use_triplet = true;
  bool use_flip_rows = true;

  double logit_scale() const noexcept { return 1.0 / temperature; }
};

void validate_train_config(const TrainConfig& config);

/// Trained parameters plus everything evaluation needs to reproduce scores.
struct Checkpoint {
  MapperParams mapper;
  Matrix t_init;  ///< [d × N]
  Matrix t_ft;    ///< [d × N]
  TrainConfig config;
  std::size_t warmup_steps = 0;  ///< resolved value actually used
  double final_loss = 0.0;

  std::size_t dim() const noexcept { return t_init.rows(); }
  std::size_t num_classes() const noexcept { return t_init.cols(); }
  double logit_scale() const noexcept { return config.logit_scale(); }
};

inline constexpr const char* kCheckpointFormat = "CMMC";
inline constexpr int kCheckpointVersion = 1;

/// Loss terms of one batch and the gradient with respect to t_ft.
struct BatchLoss {
  double ce = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  Matrix grad_t;  ///< [d × N]
};

/// Forward and backward pass of one batch: CE on α·scale·s_cmm + s_clip plus
/// the triplet term. Overwrites mapper.grads. `s_clip` must already be scaled.
BatchLoss batch_loss(MapperParams& mapper, const Matrix& t_ft, const Matrix& x, const Matrix& s_clip,
                     std::span<const std::uint32_t> labels, const TrainConfig& config);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  ///< total loss per iteration
};

/// Optimizes the mapper layers and t_ft on the task's rows for exactly
/// config.total_steps iterations. Cache features and t_init are read-only.
TrainResult train(const EmbeddingCache& cache, const FewShotTask& task, const TrainConfig& config);

/// Directory layout: manifest.json plus little-endian float64 blobs, so that a
/// reloaded checkpoint evaluates bit-identically.
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cmm
