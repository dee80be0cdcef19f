// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/prototypes.hpp"

#include <string>

#include "cmm/error.hpp"
#include "cmm/numerics.hpp"

namespace cmm {

TextPrototypes build_text_prototypes(const EmbeddingCache& cache) {
  const std::size_t n = cache.num_classes();
  const std::size_t templates = cache.num_templates;
  const std::size_t d = cache.dim;
  if (templates == 0 || cache.text_features.rows() != n * templates || cache.text_features.cols() != d) {
    throw Error(Errc::DimensionMismatch, "text features must be [N·L × dim]");
  }

  TextPrototypes protos;
  protos.t_init = Matrix(d, n);
  std::vector<double> mean(d);
  for (std::size_t k = 0; k < n; ++k) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t m = 0; m < templates; ++m) {
      auto row = cache.text_features.row(k * templates + m);
      for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (double& x : mean) x /= static_cast<double>(templates);
    try {
      protos.t_init.set_column(k, l2_normalize(mean));
    } catch (const Error&) {
      throw Error(Errc::ZeroNorm, "template mean of class " + std::to_string(k) + " is zero");
    }
  }
  protos.t_ft = protos.t_init;
  protos.grad_t = Matrix(d, n);
  return protos;
}

}  // namespace cmm
