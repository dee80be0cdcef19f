// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cmm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Moment buffers for one parameter tensor.
struct AdamWState {
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// Decoupled-weight-decay Adam:
///   θ ← θ·(1 − lr·wd);  θ ← θ − lr·m̂/(√v̂ + ε)
/// with bias-corrected moments. Buffers are sized lazily on the first call.
void adamw_step(const AdamWConfig& config, AdamWState& state, std::span<double> params,
                std::span<const double> grads, double lr);

/// Linear warmup from 0 to lr_base, then cosine annealing down to lr_min.
struct Schedule {
  std::size_t warmup_steps = 1;
  std::size_t total_steps = 16000;
  double lr_base = 1e-4;
  double lr_min = 1e-5;
};

void validate_schedule(const Schedule& schedule);

/// Learning rate at `step` ∈ [0, total_steps].
double lr_at(const Schedule& schedule, std::size_t step);

/// Warmup length for a run measured in epochs over `train_rows` rows:
/// epochs · ceil(train_rows / batch_size), capped at half the run.
std::size_t warmup_steps_for_epochs(std::size_t epochs, std::size_t train_rows,
                                    std::size_t batch_size, std::size_t total_steps);

}  // namespace cmm
