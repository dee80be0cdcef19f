// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/gap_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>

#include "cmm/error.hpp"
#include "cmm/mapper.hpp"
#include "cmm/numerics.hpp"
#include "cmm/random.hpp"

namespace cmm {

using nlohmann::json;

namespace {

// Bures terms smaller than this fraction of tr(Σp)+tr(Σq) are eigensolver
// roundoff, not signal.
constexpr double kBuresRoundoff = 1e-12;

void require_same_dim(const GaussianStats& p, const GaussianStats& q) {
  if (p.mean.size() != q.mean.size() || p.cov.rows() != p.mean.size() ||
      q.cov.rows() != q.mean.size()) {
    throw Error(Errc::DimMismatch, "Gaussians have different dimensions");
  }
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
  for (std::size_t r = 0; r < b.rows(); ++r)
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(a.rows() + r).begin());
  return out;
}

Matrix row_range(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r)
    std::copy(m.row(r).begin(), m.row(r).end(), out.row(r - begin).begin());
  return out;
}

std::vector<std::uint32_t> prototype_labels(std::size_t n) {
  std::vector<std::uint32_t> labels(n);
  for (std::size_t k = 0; k < n; ++k) labels[k] = static_cast<std::uint32_t>(k);
  return labels;
}

}  // namespace

GaussianStats gaussian_mle(const Matrix& points) {
  if (points.rows() < 2) throw Error(Errc::TooFewSamples, "Gaussian fit needs at least two points");
  GaussianStats g;
  g.count = points.rows();
  g.mean = column_mean(points);
  g.cov = covariance_mle(points, g.mean);
  const std::size_t d = points.cols();
  g.ridge = kCovarianceRidge * trace(g.cov) / static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) g.cov(i, i) += g.ridge;
  return g;
}

double kl_gaussian(const GaussianStats& p, const GaussianStats& q) {
  require_same_dim(p, q);
  const std::size_t d = p.mean.size();
  const EigResult eq = sym_eig(q.cov);
  const EigResult ep = sym_eig(p.cov);
  double logdet_q = 0.0;
  double logdet_p = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    if (!(eq.values[k] > 0.0) || !(ep.values[k] > 0.0)) {
      throw Error(Errc::SingularCovariance, "covariance is not positive definite");
    }
    logdet_q += std::log(eq.values[k]);
    logdet_p += std::log(ep.values[k]);
  }

  // With Σq = VΛVᵀ: tr(Σq⁻¹Σp) = Σₖ vₖᵀΣp vₖ/λₖ and δᵀΣq⁻¹δ = Σₖ (vₖᵀδ)²/λₖ.
  std::vector<double> delta(d);
  for (std::size_t i = 0; i < d; ++i) delta[i] = q.mean[i] - p.mean[i];
  const Matrix sp_v = matmul(p.cov, eq.vectors);
  double trace_term = 0.0;
  double mahalanobis = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double quad = 0.0;
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      quad += eq.vectors(i, k) * sp_v(i, k);
      proj += eq.vectors(i, k) * delta[i];
    }
    trace_term += quad / eq.values[k];
    mahalanobis += proj * proj / eq.values[k];
  }
  const double kl = 0.5 * (trace_term + mahalanobis - static_cast<double>(d) + logdet_q - logdet_p);
  return std::max(kl, 0.0);
}

double wasserstein2_gaussian(const GaussianStats& p, const GaussianStats& q) {
  require_same_dim(p, q);
  double mean_term = 0.0;
  for (std::size_t i = 0; i < p.mean.size(); ++i) {
    const double diff = p.mean[i] - q.mean[i];
    mean_term += diff * diff;
  }
  const Matrix root_q = psd_sqrt(q.cov);
  Matrix cross = matmul(matmul(root_q, p.cov), root_q);
  for (std::size_t i = 0; i < cross.rows(); ++i)
    for (std::size_t j = i + 1; j < cross.cols(); ++j) {
      const double avg = 0.5 * (cross(i, j) + cross(j, i));
      cross(i, j) = avg;
      cross(j, i) = avg;
    }
  const double traces = trace(p.cov) + trace(q.cov);
  double bures = traces - 2.0 * trace(psd_sqrt(cross));
  if (bures <= kBuresRoundoff * traces) bures = 0.0;
  return std::sqrt(mean_term + bures);
}

SimilarityStats similarity_stats(const Matrix& image_feats, const Matrix& text_protos,
                                 std::span<const std::uint32_t> labels, std::uint64_t seed,
                                 std::size_t max_pairs) {
  const std::size_t n = image_feats.rows();
  const std::size_t classes = text_protos.cols();
  if (classes < 2) throw Error(Errc::SingleClass, "similarity statistics need two classes");
  if (image_feats.cols() != text_protos.rows()) throw Error(Errc::DimMismatch, "feature dims differ");
  if (labels.size() != n) throw Error(Errc::DimMismatch, "label count differs from rows");
  for (auto y : labels)
    if (y >= classes) throw Error(Errc::LabelOutOfRange, "label " + std::to_string(y));
  if (std::set<std::uint32_t>(labels.begin(), labels.end()).size() < 2) {
    throw Error(Errc::SingleClass, "image population holds a single class");
  }

  SimilarityStats s;
  const Matrix sims = matmul(image_feats, text_protos);
  double matched = 0.0;
  double mismatched = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < classes; ++k) {
      if (k == labels[i]) {
        matched += sims(i, k);
      } else {
        mismatched += sims(i, k);
      }
    }
  s.matched_mean = matched / static_cast<double>(n);
  s.mismatched_mean = mismatched / static_cast<double>(n * (classes - 1));

  double intra = 0.0;
  const std::size_t all_pairs = n * (n - 1) / 2;
  if (all_pairs <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (labels[i] == labels[j]) continue;
        intra += dot(image_feats.row(i), image_feats.row(j));
        ++s.intra_pairs;
      }
  } else {
    SplitMix64 rng(seed);
    while (s.intra_pairs < max_pairs) {
      const auto i = static_cast<std::size_t>(rng.below(n));
      const auto j = static_cast<std::size_t>(rng.below(n));
      if (i == j || labels[i] == labels[j]) continue;
      intra += dot(image_feats.row(i), image_feats.row(j));
      ++s.intra_pairs;
    }
  }
  s.intra_modal_interclass_mean = intra / static_cast<double>(s.intra_pairs);
  return s;
}

GapStage measure_gap(const Matrix& images, const Matrix& protos, std::span<const std::uint32_t> labels) {
  GapStage stage;
  const Matrix text = transpose(protos);
  const Matrix pooled = vstack(images, text);
  const PcaResult pca = pca_project(pooled, 2);
  const GaussianStats image_2d = gaussian_mle(row_range(pca.projected, 0, images.rows()));
  const GaussianStats text_2d = gaussian_mle(row_range(pca.projected, images.rows(), pooled.rows()));
  stage.kl_image_text_2d = kl_gaussian(image_2d, text_2d);
  stage.kl_text_image_2d = kl_gaussian(text_2d, image_2d);
  stage.w2 = wasserstein2_gaussian(gaussian_mle(images), gaussian_mle(text));
  stage.similarity = similarity_stats(images, protos, labels);
  return stage;
}

StagePopulations before_populations(const Checkpoint& checkpoint, const Split& split) {
  return {split.features, checkpoint.t_init};
}

StagePopulations after_populations(const Checkpoint& checkpoint, const Split& split) {
  StagePopulations pop{map_apply(checkpoint.mapper, split.features), checkpoint.t_ft};
  normalize_columns(pop.protos);
  return pop;
}

GapReport gap_report(const Checkpoint& checkpoint, const Split& split) {
  if (split.count() < 2) throw Error(Errc::TooFewSamples, "gap report needs at least two images");
  GapReport report;
  report.image_count = split.count();
  report.text_count = checkpoint.num_classes();
  const auto before = before_populations(checkpoint, split);
  const auto after = after_populations(checkpoint, split);
  report.before = measure_gap(before.images, before.protos, split.labels);
  report.after = measure_gap(after.images, after.protos, split.labels);
  return report;
}

json to_json(const GapReport& report) {
  auto stage_json = [](const GapStage& s) {
    return json{{"kl_image_text_2d", s.kl_image_text_2d},
                {"kl_text_image_2d", s.kl_text_image_2d},
                {"w2", s.w2},
                {"similarity",
                 {{"matched_mean", s.similarity.matched_mean},
                  {"mismatched_mean", s.similarity.mismatched_mean},
                  {"intra_modal_interclass_mean", s.similarity.intra_modal_interclass_mean},
                  {"intra_pairs", s.similarity.intra_pairs}}}};
  };
  json j;
  j["before"] = stage_json(report.before);
  j["after"] = stage_json(report.after);
  j["image_count"] = report.image_count;
  j["text_count"] = report.text_count;
  j["covariance_ridge"] = kCovarianceRidge;
  j["populations"] = {{"before", "raw image features vs initial prototypes"},
                      {"after", "mapped image features vs normalized trained prototypes"}};
  return j;
}

void write_projection_csv(std::ostream& out, const std::string& stage, const StagePopulations& pop,
                          std::span<const std::uint32_t> labels) {
  if (labels.size() != pop.images.rows()) throw Error(Errc::DimMismatch, "label count differs from rows");
  const Matrix text = transpose(pop.protos);
  const PcaResult pca = pca_project(vstack(pop.images, text), 2);
  const auto text_labels = prototype_labels(text.rows());
  char line[96];
  for (std::size_t r = 0; r < pca.projected.rows(); ++r) {
    const bool is_image = r < pop.images.rows();
    const auto label = is_image ? labels[r] : text_labels[r - pop.images.rows()];
    std::snprintf(line, sizeof line, ",%s,%u,%.9g,%.9g\n", is_image ? "image" : "text",
                  static_cast<unsigned>(label), pca.projected(r, 0), pca.projected(r, 1));
    out << stage << line;
  }
}

}  // namespace cmm
