// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmm/embedding_store.hpp"
#include "cmm/matrix.hpp"
#include "cmm/trainer.hpp"

namespace cmm {

/// Relative covariance ridge: Σ += kCovarianceRidge · tr(Σ)/d′ · I.
inline constexpr double kCovarianceRidge = 1e-6;

struct GaussianStats {
  std::vector<double> mean;
  Matrix cov;
  std::size_t count = 0;
  double ridge = 0.0;
};

/// Sample mean and 1/n covariance plus the relative ridge.
GaussianStats gaussian_mle(const Matrix& points);

/// KL(p ‖ q) between multivariate normals.
double kl_gaussian(const GaussianStats& p, const GaussianStats& q);

/// Closed-form 2-Wasserstein distance between normals:
/// √(‖μp−μq‖² + tr(Σp + Σq − 2(Σq^½ Σp Σq^½)^½)).
double wasserstein2_gaussian(const GaussianStats& p, const GaussianStats& q);

struct SimilarityStats {
  double matched_mean = 0.0;
  double mismatched_mean = 0.0;
  double intra_modal_interclass_mean = 0.0;
  std::size_t intra_pairs = 0;
};

/// Cosine statistics for unit image rows [n × d] against unit prototype
/// columns [d × N]. Image pairs with different labels are enumerated when
/// there are at most `max_pairs` of them, otherwise `max_pairs` are sampled.
SimilarityStats similarity_stats(const Matrix& image_feats, const Matrix& text_protos,
                                 std::span<const std::uint32_t> labels, std::uint64_t seed = 0,
                                 std::size_t max_pairs = 1'000'000);

/// Gap measurements for one image population against one prototype set.
struct GapStage {
  double kl_image_text_2d = 0.0;  ///< KL(image ‖ text) on shared PCA-2D coordinates
  double kl_text_image_2d = 0.0;
  double w2 = 0.0;  ///< on the full-dimensional features
  SimilarityStats similarity;
};

struct GapReport {
  GapStage before;  ///< raw image features vs t_init
  GapStage after;   ///< mapped image features vs normalized t_ft
  std::size_t image_count = 0;
  std::size_t text_count = 0;
};

/// `images` are unit rows; `protos` are unit columns [d × N].
GapStage measure_gap(const Matrix& images, const Matrix& protos, std::span<const std::uint32_t> labels);

GapReport gap_report(const Checkpoint& checkpoint, const Split& split);

nlohmann::json to_json(const GapReport& report);

/// Image rows and prototypes of one stage, normalized as the classifier sees them.
struct StagePopulations {
  Matrix images;  ///< [n × d]
  Matrix protos;  ///< [d × N]
};

StagePopulations before_populations(const Checkpoint& checkpoint, const Split& split);
StagePopulations after_populations(const Checkpoint& checkpoint, const Split& split);

inline constexpr const char* kProjectionCsvHeader = "stage,modality,label,x,y\n";

/// Appends CSV rows `stage,modality,label,x,y` for one stage: images and
/// prototypes projected onto the PCA-2D basis of their pooled set.
void write_projection_csv(std::ostream& out, const std::string& stage, const StagePopulations& pop,
                          std::span<const std::uint32_t> labels);

}  // namespace cmm
