// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cmm/matrix.hpp"

namespace cmm {

/// Residual image-to-text map. Depth 0 is the single linear layer
/// x ↦ x(W + I); depth k ≥ 2 stacks k such layers with a ReLU after every
/// residual add except the last. Output rows are re-normalized to the sphere.
struct MapperParams {
  std::size_t dim = 0;
  std::size_t depth = 0;
  std::vector<Matrix> layers;
  std::vector<Matrix> grads;

  std::size_t num_layers() const noexcept { return layers.size(); }
  void zero_grad();
};

/// Kaiming-normal (fan-in, gain √2) initialization: entries ~ N(0, 2/d).
/// Depth 1 is rejected as ambiguous with depth 0.
MapperParams init_mapper(std::size_t dim, std::size_t depth, std::uint64_t seed);

/// Intermediates recorded by map_forward for the backward pass.
struct MapperTape {
  std::size_t dim = 0;
  std::vector<Matrix> inputs;          ///< input to layer j
  std::vector<Matrix> pre_activation;  ///< x_j(W_j + I)
  std::vector<double> output_norms;    ///< ‖y_b‖ before the final normalization
  Matrix output;                       ///< normalized mapped rows
};

struct MapResult {
  Matrix output;
  MapperTape tape;
};

MapResult map_forward(const MapperParams& params, const Matrix& v_hat);

/// Forward pass without recording a tape.
Matrix map_apply(const MapperParams& params, const Matrix& v_hat);

/// Back-propagates `upstream` (∂L/∂output) through normalization, rectifiers
/// and residual layers. Accumulates into params.grads and returns ∂L/∂input,
/// or an empty matrix when `want_input_grad` is false.
Matrix map_backward(MapperParams& params, const MapperTape& tape, const Matrix& upstream,
                    bool want_input_grad = true);

}  // namespace cmm
