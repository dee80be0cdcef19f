// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/mapper.hpp"

#include <cmath>
#include <string>

#include "cmm/error.hpp"
#include "cmm/numerics.hpp"
#include "cmm/random.hpp"

namespace cmm {

namespace {

// x(W + I) = xW + x
Matrix residual_linear(const Matrix& x, const Matrix& w) {
  Matrix z = matmul(x, w);
  auto zv = z.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < zv.size(); ++i) zv[i] += xv[i];
  return z;
}

void relu_inplace(Matrix& m) {
  for (double& x : m.values())
    if (x < 0.0) x = 0.0;
}

void check_input(const MapperParams& params, const Matrix& v_hat) {
  if (params.layers.empty()) throw Error(Errc::BadConfig, "mapper has no layers");
  if (v_hat.cols() != params.dim) {
    throw Error(Errc::DimMismatch, "mapper expects dim " + std::to_string(params.dim) + ", got " +
                                       std::to_string(v_hat.cols()));
  }
}

}  // namespace

void MapperParams::zero_grad() {
  for (auto& g : grads) g.fill(0.0);
}

MapperParams init_mapper(std::size_t dim, std::size_t depth, std::uint64_t seed) {
  if (dim == 0) throw Error(Errc::BadConfig, "mapper dimension must be positive");
  if (depth == 1) throw Error(Errc::BadConfig, "depth must be 0 (linear) or at least 2");
  MapperParams params;
  params.dim = dim;
  params.depth = depth;
  const std::size_t count = depth == 0 ? 1 : depth;
  const double stddev = std::sqrt(2.0 / static_cast<double>(dim));
  SplitMix64 rng(seed);
  for (std::size_t l = 0; l < count; ++l) {
    Matrix w(dim, dim);
    for (double& x : w.values()) x = stddev * rng.normal();
    params.layers.push_back(std::move(w));
    params.grads.emplace_back(dim, dim);
  }
  return params;
}

MapResult map_forward(const MapperParams& params, const Matrix& v_hat) {
  check_input(params, v_hat);
  MapResult result;
  MapperTape& tape = result.tape;
  tape.dim = params.dim;
  Matrix h = v_hat;
  const std::size_t last = params.num_layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    Matrix z = residual_linear(h, params.layers[l]);
    tape.inputs.push_back(std::move(h));
    h = z;
    if (l != last) relu_inplace(h);
    tape.pre_activation.push_back(std::move(z));
  }
  tape.output_norms = normalize_rows(h);
  tape.output = h;
  result.output = std::move(h);
  return result;
}

Matrix map_apply(const MapperParams& params, const Matrix& v_hat) {
  check_input(params, v_hat);
  Matrix h = v_hat;
  const std::size_t last = params.num_layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    h = residual_linear(h, params.layers[l]);
    if (l != last) relu_inplace(h);
  }
  normalize_rows(h);
  return h;
}

Matrix map_backward(MapperParams& params, const MapperTape& tape, const Matrix& upstream,
                    bool want_input_grad) {
  const std::size_t layers = params.num_layers();
  if (tape.dim != params.dim || tape.inputs.size() != layers || tape.pre_activation.size() != layers ||
      upstream.rows() != tape.output.rows() || upstream.cols() != tape.output.cols()) {
    throw Error(Errc::TapeMismatch, "tape does not match mapper parameters or upstream gradient");
  }

  // d(y/‖y‖)/dy = (I − ŷŷᵀ)/‖y‖
  Matrix grad = upstream;
  for (std::size_t b = 0; b < grad.rows(); ++b) {
    auto g = grad.row(b);
    auto y_hat = tape.output.row(b);
    const double along = dot(g, y_hat);
    const double inv_norm = 1.0 / tape.output_norms[b];
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = (g[j] - along * y_hat[j]) * inv_norm;
  }

  for (std::size_t l = layers; l-- > 0;) {
    if (l != layers - 1) {
      auto gv = grad.values();
      auto zv = tape.pre_activation[l].values();
      for (std::size_t i = 0; i < gv.size(); ++i)
        if (!(zv[i] > 0.0)) gv[i] = 0.0;
    }
    matmul_tn_accumulate(tape.inputs[l], grad, params.grads[l]);
    if (l == 0 && !want_input_grad) return {};

    Matrix dx = matmul_nt(grad, params.layers[l]);
    auto dxv = dx.values();
    auto gv = grad.values();
    for (std::size_t i = 0; i < dxv.size(); ++i) dxv[i] += gv[i];
    grad = std::move(dx);
  }
  return grad;
}

}  // namespace cmm
