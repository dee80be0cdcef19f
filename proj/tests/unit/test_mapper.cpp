// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>

#include <catch_amalgamated.hpp>

#include "cmm/error.hpp"
#include "cmm/mapper.hpp"
#include "oracles.hpp"

using namespace cmm;
using Catch::Matchers::WithinAbs;

namespace {

// Scalar probe: sum of upstream ⊙ mapped output.
double probe(const MapperParams& params, const Matrix& x, const Matrix& upstream) {
  const Matrix y = map_apply(params, x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * upstream.values()[i];
  return s;
}

double central(double& slot, double h, const std::function<double()>& f) {
  const double saved = slot;
  slot = saved + h;
  const double up = f();
  slot = saved - h;
  const double down = f();
  slot = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("zero weights give the identity map") {
  SplitMix64 rng(1);
  MapperParams linear = init_mapper(6, 0, 5);
  linear.layers[0].fill(0.0);
  const Matrix x = oracle::random_unit_rows(5, 6, rng);
  CHECK(max_abs_diff(map_apply(linear, x), x) <= 1e-15);

  // Hidden ReLUs pass non-negative rows unchanged.
  Matrix positive = x;
  for (double& v : positive.values()) v = std::abs(v);
  for (std::size_t depth : {2u, 3u}) {
    MapperParams params = init_mapper(6, depth, 5);
    for (auto& w : params.layers) w.fill(0.0);
    CHECK(max_abs_diff(map_apply(params, positive), positive) <= 1e-15);
  }
}

TEST_CASE("mapped rows are unit vectors") {
  SplitMix64 rng(2);
  const MapperParams params = init_mapper(12, 3, 9);
  const Matrix y = map_apply(params, oracle::random_unit_rows(20, 12, rng));
  for (std::size_t r = 0; r < y.rows(); ++r) CHECK_THAT(norm2(y.row(r)), WithinAbs(1.0, 1e-12));
}

TEST_CASE("initialization uses He variance and one matrix per layer") {
  const MapperParams linear = init_mapper(64, 0, 3);
  CHECK(linear.num_layers() == 1);
  const MapperParams deep = init_mapper(64, 4, 3);
  CHECK(deep.num_layers() == 4);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& w : deep.layers)
    for (double x : w.values()) {
      sum += x;
      sq += x * x;
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK_THAT(var, WithinAbs(2.0 / 64.0, 0.002));
  CHECK(init_mapper(64, 4, 3).layers == deep.layers);
  CHECK(init_mapper(64, 4, 4).layers != deep.layers);
}

TEST_CASE("init_mapper rejects depth one and zero dimension") {
  CHECK_THROWS_AS(init_mapper(8, 1, 0), Error);
  CHECK_THROWS_AS(init_mapper(0, 0, 0), Error);
}

TEST_CASE("backward matches central differences for weights and inputs") {
  const std::size_t d = 16;
  const std::size_t batch = 4;
  for (std::size_t depth : {0u, 2u, 3u}) {
    SplitMix64 rng(100 + depth);
    MapperParams params = init_mapper(d, depth, rng.next());
    Matrix x = oracle::random_unit_rows(batch, d, rng);
    const Matrix upstream = oracle::random_matrix(batch, d, rng);

    params.zero_grad();
    const MapResult fwd = map_forward(params, x);
    const Matrix dx = map_backward(params, fwd.tape, upstream);

    const auto f = [&] { return probe(params, x, upstream); };
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
      Matrix numeric(d, d);
      for (std::size_t i = 0; i < numeric.size(); ++i)
        numeric.values()[i] = central(params.layers[l].values()[i], 1e-6, f);
      CHECK(oracle::relative_error(params.grads[l], numeric) <= 1e-6);
    }
    Matrix numeric_x(batch, d);
    for (std::size_t i = 0; i < numeric_x.size(); ++i) numeric_x.values()[i] = central(x.values()[i], 1e-6, f);
    CHECK(oracle::relative_error(dx, numeric_x) <= 1e-6);
  }
}

TEST_CASE("backward accumulates weight gradients and can skip the input gradient") {
  SplitMix64 rng(7);
  MapperParams params = init_mapper(8, 2, 1);
  const Matrix x = oracle::random_unit_rows(3, 8, rng);
  const Matrix upstream = oracle::random_matrix(3, 8, rng);
  const MapResult fwd = map_forward(params, x);

  params.zero_grad();
  map_backward(params, fwd.tape, upstream);
  const auto once = params.grads;
  CHECK(map_backward(params, fwd.tape, upstream, false).empty());
  for (std::size_t l = 0; l < params.num_layers(); ++l)
    CHECK(max_abs_diff(params.grads[l], 2.0 * once[l]) <= 1e-14);
}

TEST_CASE("mapper validates shapes") {
  SplitMix64 rng(3);
  MapperParams params = init_mapper(8, 0, 1);
  CHECK_THROWS_AS(map_apply(params, oracle::random_unit_rows(2, 7, rng)), Error);
  const MapResult fwd = map_forward(params, oracle::random_unit_rows(2, 8, rng));
  try {
    map_backward(params, fwd.tape, Matrix(3, 8));
    FAIL("expected TapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TapeMismatch);
  }
}
