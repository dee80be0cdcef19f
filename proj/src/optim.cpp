// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cmm/error.hpp"

namespace cmm {

void adamw_step(const AdamWConfig& config, AdamWState& state, std::span<double> params,
                std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) {
    throw Error(Errc::ShapeMismatch, "parameter/gradient sizes " + std::to_string(params.size()) +
                                         " vs " + std::to_string(grads.size()));
  }
  if (state.m.empty() && state.step == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer state was sized for another tensor");
  }
  for (double g : grads)
    if (!std::isfinite(g)) throw Error(Errc::NonFiniteGradient, "gradient contains NaN or Inf");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - lr * config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] *= decay;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void validate_schedule(const Schedule& s) {
  if (s.total_steps == 0 || s.warmup_steps == 0 || s.warmup_steps >= s.total_steps) {
    throw Error(Errc::BadConfig, "schedule needs 0 < warmup_steps (" + std::to_string(s.warmup_steps) +
                                     ") < total_steps (" + std::to_string(s.total_steps) + ")");
  }
  if (!(s.lr_base >= 0.0) || !(s.lr_min >= 0.0) || s.lr_min > s.lr_base) {
    throw Error(Errc::BadConfig, "learning rates need 0 <= lr_min <= lr_base");
  }
}

double lr_at(const Schedule& s, std::size_t step) {
  validate_schedule(s);
  if (step > s.total_steps) {
    throw Error(Errc::OutOfRange, "step " + std::to_string(step) + " beyond total " +
                                      std::to_string(s.total_steps));
  }
  if (step < s.warmup_steps) {
    return s.lr_base * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  // Convex blend so both endpoints come out exactly lr_base and lr_min.
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return w * s.lr_base + (1.0 - w) * s.lr_min;
}

std::size_t warmup_steps_for_epochs(std::size_t epochs, std::size_t train_rows,
                                    std::size_t batch_size, std::size_t total_steps) {
  if (batch_size == 0) throw Error(Errc::BadConfig, "batch size must be positive");
  const std::size_t per_epoch = (train_rows + batch_size - 1) / batch_size;
  const std::size_t cap = std::max<std::size_t>(1, total_steps / 2);
  return std::clamp<std::size_t>(epochs * per_epoch, 1, cap);
}

}  // namespace cmm
