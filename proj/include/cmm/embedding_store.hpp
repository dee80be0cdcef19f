// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmm/matrix.hpp"

namespace cmm {

/// One split of a cache. `flip_of[i]` is the index (within the same split) of
/// the original row that row i is the horizontally-flipped encoding of, or -1
/// for original rows. Absent when the split carries no flipped rows.
struct Split {
  Matrix features;
  std::vector<std::uint32_t> labels;
  std::optional<std::vector<std::int32_t>> flip_of;

  std::size_t count() const noexcept { return labels.size(); }
};

/// Pre-extracted, L2-normalized embeddings. `text_features` holds one row per
/// (class, template) pair, class-major: row c·L + m is template m of class c.
struct EmbeddingCache {
  std::size_t dim = 0;
  std::size_t num_templates = 0;
  std::vector<std::string> class_names;
  Matrix text_features;
  Split train;
  Split val;
  Split test;

  std::size_t num_classes() const noexcept { return class_names.size(); }
};

/// Tolerance on |‖row‖ − 1| accepted for cached feature rows.
inline constexpr double kNormTolerance = 1e-5;

inline constexpr const char* kCacheFormat = "CMME";
inline constexpr int kCacheVersion = 1;

/// Throws on any violated cache invariant (shapes, label range, unit rows,
/// flip indices).
void validate_cache(const EmbeddingCache& cache);

/// Reads a cache directory (manifest.json plus raw little-endian blobs).
EmbeddingCache load_cache(const std::filesystem::path& dir);

/// Writes `cache` to `dir`, creating it if needed. Output bytes depend only on
/// the cache contents.
void write_cache(const EmbeddingCache& cache, const std::filesystem::path& dir);

/// A k-shot training subset. Rows [0, shots·N) are the sampled originals in
/// class-major order; any flipped counterparts follow in the same order.
struct FewShotTask {
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> base_rows;  ///< indices into cache.train
  std::vector<std::size_t> flip_rows;  ///< indices into cache.train
  Matrix train_features;
  std::vector<std::uint32_t> train_labels;
};

FewShotTask sample_fewshot(const EmbeddingCache& cache, std::size_t shots, std::uint64_t seed,
                           bool use_flip_rows);

struct SynthConfig {
  std::size_t num_classes = 8;
  std::size_t num_templates = 4;
  std::size_t dim = 64;
  std::size_t train_per_class = 32;
  std::size_t val_per_class = 50;  ///< capped at 200
  std::size_t test_per_class = 100;
  /// How far apart the class means are: 0 makes every class mean identical.
  double class_separation = 1.0;
  double noise_sigma = 0.05;
  double flip_sigma = 0.05;
  bool with_flips = true;
  /// Magnitude of the common offset added to every text prototype.
  double gap_shift = 0.5;
  /// Angle (radians) by which the text-side rotation turns every vector.
  double rotation_angle = 1.2;
  std::uint64_t rotation_seed = 17;
  double template_sigma = 0.05;
  std::uint64_t seed = 0;
};

/// Synthetic cache with a controllable image/text distribution mismatch:
/// images are noisy samples around per-class means on the sphere; text
/// templates are those means pushed through a fixed rotation plus a global
/// shift, then normalized.
EmbeddingCache synth_generate(const SynthConfig& config);

}  // namespace cmm
