// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used as test oracles. They share
// only plain data types with the library and are written for clarity, not
// speed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cmm/matrix.hpp"
#include "cmm/random.hpp"
#include "cmm/trainer.hpp"

namespace cmm::oracle {

Matrix random_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng, double scale = 1.0);
Matrix random_unit_rows(std::size_t rows, std::size_t cols, SplitMix64& rng);
Matrix random_unit_columns(std::size_t rows, std::size_t cols, SplitMix64& rng);
std::vector<std::uint32_t> random_labels(std::size_t n, std::size_t classes, SplitMix64& rng);

/// Haar-ish random orthogonal matrix from Gram–Schmidt on Gaussian columns.
Matrix random_rotation(std::size_t d, SplitMix64& rng);

/// Symmetric positive-definite matrix A Aᵀ/d + floor·I.
Matrix random_spd(std::size_t d, SplitMix64& rng, double floor = 0.1);

Matrix naive_matmul(const Matrix& a, const Matrix& b);

struct TripletScan {
  double loss = 0.0;
  std::vector<std::size_t> hardest;
};

/// Lists every negative's cosine distance for every anchor and takes the
/// smallest (first index on ties).
TripletScan exhaustive_triplet(const Matrix& anchors, const Matrix& t_hat,
                               std::span<const std::uint32_t> labels, double margin);

/// CE + triplet loss of one batch evaluated with plain loops in long double.
long double reference_batch_loss(const std::vector<Matrix>& layers, const Matrix& t_ft, const Matrix& x,
                                 const Matrix& s_clip, std::span<const std::uint32_t> labels,
                                 const TrainConfig& config);

struct NumericGrads {
  std::vector<Matrix> layers;
  Matrix t_ft;
};

/// Central differences of reference_batch_loss with step h.
NumericGrads finite_difference_grads(const std::vector<Matrix>& layers, const Matrix& t_ft,
                                     const Matrix& x, const Matrix& s_clip,
                                     std::span<const std::uint32_t> labels, const TrainConfig& config,
                                     double h = 1e-5);

/// max|a − n| / max(max|a|, max|n|): relative error at the tensor's scale.
double relative_error(const Matrix& analytic, const Matrix& numeric);

struct GradientCase {
  std::size_t dim = 8;
  std::size_t batch = 1;
  std::size_t depth = 0;
  std::size_t classes = 5;
  std::uint64_t seed = 0;
};

struct GradientCheck {
  double max_layer_error = 0.0;
  double t_ft_error = 0.0;
  double loss_gap = 0.0;  ///< |library loss − reference loss|
};

/// Builds a random batch and compares batch_loss gradients with central
/// differences of the reference loss.
GradientCheck check_gradients(const GradientCase& c);

/// KL(N(mp, vp) ‖ N(mq, vq)) for scalar normals given variances.
double kl_1d(double mp, double vp, double mq, double vq);
/// Sum of per-axis 1-D terms for diagonal covariances.
double kl_diagonal(std::span<const double> mp, std::span<const double> vp, std::span<const double> mq,
                   std::span<const double> vq);
/// √(‖Δμ‖² + Σ(√vp − √vq)²) for diagonal covariances.
double w2_diagonal(std::span<const double> mp, std::span<const double> vp, std::span<const double> mq,
                   std::span<const double> vq);

struct ScalarAdam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double m = 0.0;
  double v = 0.0;
  int t = 0;

  /// θ ← θ(1 − lr·λ) − lr·m̂/(√v̂ + ε) with bias-corrected moments.
  double step(double theta, double grad, double lr);
};

}  // namespace cmm::oracle
