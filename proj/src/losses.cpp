// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cmm/error.hpp"
#include "cmm/numerics.hpp"

namespace cmm {

namespace {

void check_labels(std::span<const std::uint32_t> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) {
    throw Error(Errc::DimMismatch, "label count " + std::to_string(labels.size()) +
                                       " != batch size " + std::to_string(rows));
  }
  for (auto y : labels)
    if (y >= classes) throw Error(Errc::LabelOutOfRange, "label " + std::to_string(y));
}

double log_sum_exp(std::span<const double> z, double scale = 1.0) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : z) mx = std::max(mx, x * scale);
  double s = 0.0;
  for (double x : z) s += std::exp(x * scale - mx);
  return mx + std::log(s);
}

}  // namespace

Matrix cmm_scores(const Matrix& v_prime_hat, const Matrix& t_ft) {
  if (v_prime_hat.cols() != t_ft.rows()) {
    throw Error(Errc::DimMismatch, "feature dim " + std::to_string(v_prime_hat.cols()) +
                                       " vs prototype dim " + std::to_string(t_ft.rows()));
  }
  return matmul(v_prime_hat, t_ft);
}

Matrix softmax_probs(const Matrix& scores, double tau) {
  if (!(tau > 0.0)) throw Error(Errc::BadConfig, "temperature must be positive");
  Matrix p(scores.rows(), scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto s = scores.row(r);
    auto out = p.row(r);
    const double mx = *std::max_element(s.begin(), s.end()) / tau;
    double total = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      out[k] = std::exp(s[k] / tau - mx);
      total += out[k];
    }
    for (double& x : out) x /= total;
  }
  return p;
}

TripletResult triplet_loss(const Matrix& anchors, const Matrix& t_hat,
                           std::span<const std::uint32_t> labels, double margin) {
  const std::size_t batch = anchors.rows();
  const std::size_t classes = t_hat.cols();
  if (classes < 2) throw Error(Errc::SingleClass, "triplet loss needs at least two classes");
  if (anchors.cols() != t_hat.rows()) throw Error(Errc::DimMismatch, "anchor/prototype dims differ");
  if (batch == 0) throw Error(Errc::EmptyBatch, "triplet loss on an empty batch");
  check_labels(labels, batch, classes);

  TripletResult out;
  out.per_sample.resize(batch);
  out.hardest_negative.resize(batch);
  out.grad_anchors = Matrix(batch, anchors.cols());
  out.grad_protos = Matrix(t_hat.rows(), classes);

  const Matrix sims = matmul(anchors, t_hat);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t pos = labels[i];
    const double d_pos = 1.0 - sims(i, pos);
    std::size_t neg = pos == 0 ? 1 : 0;
    double d_neg = 1.0 - sims(i, neg);
    for (std::size_t k = neg + 1; k < classes; ++k) {
      if (k == pos) continue;
      const double dk = 1.0 - sims(i, k);
      if (dk < d_neg) {
        d_neg = dk;
        neg = k;
      }
    }
    out.hardest_negative[i] = neg;
    const double hinge = d_pos - d_neg + margin;
    out.per_sample[i] = std::max(0.0, hinge);
    out.loss += out.per_sample[i];
    if (!(hinge > 0.0)) continue;

    // hinge = aᵀt̂_neg − aᵀt̂_pos + margin
    auto a = anchors.row(i);
    auto ga = out.grad_anchors.row(i);
    for (std::size_t j = 0; j < a.size(); ++j) {
      ga[j] += (t_hat(j, neg) - t_hat(j, pos)) * inv_b;
      out.grad_protos(j, pos) -= a[j] * inv_b;
      out.grad_protos(j, neg) += a[j] * inv_b;
    }
  }
  out.loss *= inv_b;
  return out;
}

CrossEntropyResult cross_entropy(const Matrix& logits, std::span<const std::uint32_t> labels) {
  const std::size_t batch = logits.rows();
  if (batch == 0) throw Error(Errc::EmptyBatch, "cross-entropy on an empty batch");
  check_labels(labels, batch, logits.cols());

  CrossEntropyResult out;
  out.grad = Matrix(batch, logits.cols());
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    auto z = logits.row(i);
    const double lse = log_sum_exp(z);
    out.loss -= z[labels[i]] - lse;
    auto g = out.grad.row(i);
    for (std::size_t k = 0; k < z.size(); ++k) g[k] = std::exp(z[k] - lse) * inv_b;
    g[labels[i]] -= inv_b;
  }
  out.loss *= inv_b;
  return out;
}

double contrastive_diagnostic(const Matrix& v_hat, const Matrix& t_hat, double tau) {
  if (v_hat.rows() != t_hat.rows() || v_hat.cols() != t_hat.cols()) {
    throw Error(Errc::DimMismatch, "image and text rows must be paired");
  }
  if (!(tau > 0.0)) throw Error(Errc::BadConfig, "temperature must be positive");
  const std::size_t batch = v_hat.rows();
  if (batch == 0) throw Error(Errc::EmptyBatch, "contrastive diagnostic on an empty batch");

  Matrix v = v_hat;
  Matrix t = t_hat;
  normalize_rows(v);
  normalize_rows(t);
  const Matrix sims = matmul_nt(v, t);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    total += log_sum_exp(sims.row(i), 1.0 / tau) - sims(i, i) / tau;
  }
  return total / static_cast<double>(batch);
}

}  // namespace cmm
