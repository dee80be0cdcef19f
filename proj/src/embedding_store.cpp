// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blob_io.hpp"
#include "cmm/error.hpp"
#include "cmm/numerics.hpp"
#include "cmm/random.hpp"

namespace cmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSplitNames[] = {"train", "val", "test"};

void validate_rows_normalized(const Matrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = norm2(m.row(r));
    if (!(std::abs(n - 1.0) <= kNormTolerance)) {
      throw Error(Errc::NonNormalizedRow,
                  what + " row " + std::to_string(r) + " has norm " + std::to_string(n));
    }
  }
}

void validate_split(const Split& split, const std::string& name, std::size_t dim,
                    std::size_t num_classes) {
  if (split.features.rows() != split.labels.size() ||
      (split.features.rows() > 0 && split.features.cols() != dim)) {
    throw Error(Errc::DimensionMismatch, name + " features/labels shape disagree");
  }
  for (std::size_t i = 0; i < split.labels.size(); ++i) {
    if (split.labels[i] >= num_classes) {
      throw Error(Errc::LabelOutOfRange, name + " label " + std::to_string(split.labels[i]) +
                                             " at row " + std::to_string(i));
    }
  }
  validate_rows_normalized(split.features, name);
  if (!split.flip_of) return;
  const auto& flip = *split.flip_of;
  if (flip.size() != split.labels.size()) {
    throw Error(Errc::DimensionMismatch, name + " flip_of length differs from row count");
  }
  for (std::size_t i = 0; i < flip.size(); ++i) {
    if (flip[i] < 0) continue;
    const auto src = static_cast<std::size_t>(flip[i]);
    if (src >= flip.size() || src == i || flip[src] != -1 || split.labels[src] != split.labels[i]) {
      throw Error(Errc::BadFlipIndex, name + " row " + std::to_string(i) +
                                          " has invalid flip source " + std::to_string(flip[i]));
    }
  }
}

json split_manifest(const Split& split, const std::string& name) {
  json j;
  j["count"] = split.count();
  if (split.count() == 0) {
    j["features"] = nullptr;
    j["labels"] = nullptr;
    j["flip_of"] = nullptr;
    return j;
  }
  j["features"] = name + ".f32";
  j["labels"] = name + ".lab";
  j["flip_of"] = split.flip_of ? json(name + ".flp") : json(nullptr);
  return j;
}

Split load_split(const fs::path& dir, const json& j, std::size_t dim) {
  Split split;
  const auto count = detail::manifest_get<std::size_t>(j, "count");
  if (count == 0) {
    split.features = Matrix(0, dim);
    return split;
  }
  split.features = detail::read_f32(dir / detail::manifest_get<std::string>(j, "features"), count, dim);
  split.labels = detail::read_u32(dir / detail::manifest_get<std::string>(j, "labels"), count);
  if (auto it = j.find("flip_of"); it != j.end() && !it->is_null()) {
    split.flip_of = detail::read_i32(dir / it->get<std::string>(), count);
  }
  return split;
}

Split& split_by_index(EmbeddingCache& c, int i) { return i == 0 ? c.train : (i == 1 ? c.val : c.test); }
const Split& split_by_index(const EmbeddingCache& c, int i) {
  return i == 0 ? c.train : (i == 1 ? c.val : c.test);
}

std::vector<double> random_unit(SplitMix64& rng, std::size_t d) {
  std::vector<double> v(d);
  for (;;) {
    for (double& x : v) x = rng.normal();
    if (norm2(v) > 1e-6) return l2_normalize(v);
  }
}

// Orthogonal matrix from modified Gram–Schmidt on a Gaussian draw.
Matrix random_orthogonal(SplitMix64& rng, std::size_t d) {
  Matrix q(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> v(d);
    for (;;) {
      for (double& x : v) x = rng.normal();
      for (std::size_t p = 0; p < c; ++p) {
        double proj = 0.0;
        for (std::size_t r = 0; r < d; ++r) proj += q(r, p) * v[r];
        for (std::size_t r = 0; r < d; ++r) v[r] -= proj * q(r, p);
      }
      if (norm2(v) > 1e-6) break;
    }
    q.set_column(c, l2_normalize(v));
  }
  return q;
}

// Applies R = Q·G·Qᵀ, where G turns each consecutive coordinate pair by
// `angle`, so R rotates every vector by the same angle (odd d leaves one axis
// fixed).
std::vector<double> rotate(const Matrix& q, double angle, std::span<const double> v) {
  const std::size_t d = v.size();
  std::vector<double> w(d, 0.0);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) w[c] += q(r, c) * v[r];
  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  for (std::size_t i = 0; i + 1 < d; i += 2) {
    const double a = w[i];
    const double b = w[i + 1];
    w[i] = cs * a - sn * b;
    w[i + 1] = sn * a + cs * b;
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) out[r] = dot(q.row(r), w);
  return out;
}

std::vector<double> to_float_precision(std::vector<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  return v;
}

// Normalized, then rounded to what a float32 blob can hold so that
// write/load round-trips are exact.
void put_unit_row(Matrix& m, std::size_t r, std::span<const double> v) {
  const auto unit = to_float_precision(l2_normalize(v));
  std::copy(unit.begin(), unit.end(), m.row(r).begin());
}

void append_noisy_samples(Split& split, SplitMix64& rng, const std::vector<std::vector<double>>& means,
                          std::size_t per_class, double sigma) {
  const std::size_t d = means.front().size();
  const std::size_t n = means.size() * per_class;
  split.features = Matrix(n, d);
  split.labels.resize(n);
  std::vector<double> v(d);
  std::size_t r = 0;
  for (std::size_t k = 0; k < means.size(); ++k)
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (std::size_t j = 0; j < d; ++j) v[j] = means[k][j] + sigma * rng.normal();
      put_unit_row(split.features, r, v);
      split.labels[r] = static_cast<std::uint32_t>(k);
    }
}

}  // namespace

void validate_cache(const EmbeddingCache& cache) {
  if (cache.dim == 0) throw Error(Errc::DimensionMismatch, "cache dimension is zero");
  if (cache.num_classes() < 2) throw Error(Errc::BadConfig, "cache needs at least two classes");
  if (cache.num_templates < 1) throw Error(Errc::BadConfig, "cache needs at least one template");
  if (cache.text_features.rows() != cache.num_classes() * cache.num_templates ||
      cache.text_features.cols() != cache.dim) {
    throw Error(Errc::DimensionMismatch, "text features must be [N·L × dim]");
  }
  validate_rows_normalized(cache.text_features, "text");
  for (int i = 0; i < 3; ++i) {
    validate_split(split_by_index(cache, i), kSplitNames[i], cache.dim, cache.num_classes());
  }
}

EmbeddingCache load_cache(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(Errc::MissingFile, manifest_path.string());
  const json m = detail::read_manifest(manifest_path);

  if (m.value("format", std::string{}) != kCacheFormat) {
    throw Error(Errc::BadMagic, manifest_path.string() + " is not a CMME cache manifest");
  }
  if (detail::manifest_get<int>(m, "version") != kCacheVersion) {
    throw Error(Errc::BadVersion, "unsupported cache version " + m["version"].dump());
  }

  EmbeddingCache cache;
  cache.dim = detail::manifest_get<std::size_t>(m, "dim");
  cache.num_templates = detail::manifest_get<std::size_t>(m, "num_templates");
  cache.class_names = detail::manifest_get<std::vector<std::string>>(m, "class_names");
  if (detail::manifest_get<std::size_t>(m, "num_classes") != cache.class_names.size()) {
    throw Error(Errc::DimensionMismatch, "num_classes disagrees with class_names");
  }
  cache.text_features =
      detail::read_f32(dir / detail::manifest_get<std::string>(m, "text_features"),
                       cache.num_classes() * cache.num_templates, cache.dim);

  if (!m.contains("splits") || !m["splits"].is_object()) {
    throw Error(Errc::BadMagic, "manifest lacks a splits object");
  }
  const json& splits = m["splits"];
  for (int i = 0; i < 3; ++i) {
    if (!splits.contains(kSplitNames[i])) {
      throw Error(Errc::BadMagic, std::string("manifest lacks split ") + kSplitNames[i]);
    }
    split_by_index(cache, i) = load_split(dir, splits.at(kSplitNames[i]), cache.dim);
  }
  validate_cache(cache);
  return cache;
}

void write_cache(const EmbeddingCache& cache, const fs::path& dir) {
  validate_cache(cache);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());

  json m;
  m["format"] = kCacheFormat;
  m["version"] = kCacheVersion;
  m["dim"] = cache.dim;
  m["num_classes"] = cache.num_classes();
  m["num_templates"] = cache.num_templates;
  m["class_names"] = cache.class_names;
  m["text_features"] = "text.f32";
  detail::write_f32(dir / "text.f32", cache.text_features);

  json splits;
  for (int i = 0; i < 3; ++i) {
    const Split& split = split_by_index(cache, i);
    const std::string name = kSplitNames[i];
    splits[name] = split_manifest(split, name);
    if (split.count() == 0) continue;
    detail::write_f32(dir / (name + ".f32"), split.features);
    detail::write_u32(dir / (name + ".lab"), split.labels);
    if (split.flip_of) detail::write_i32(dir / (name + ".flp"), *split.flip_of);
  }
  m["splits"] = splits;
  detail::write_manifest(dir / "manifest.json", m);
}

FewShotTask sample_fewshot(const EmbeddingCache& cache, std::size_t shots, std::uint64_t seed,
                           bool use_flip_rows) {
  if (shots == 0) throw Error(Errc::BadConfig, "shots must be positive");
  const Split& train = cache.train;
  const std::size_t n_classes = cache.num_classes();

  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < train.count(); ++i) {
    if (train.flip_of && (*train.flip_of)[i] >= 0) continue;
    by_class[train.labels[i]].push_back(i);
  }

  FewShotTask task;
  task.shots = shots;
  task.seed = seed;
  task.num_classes = n_classes;
  SplitMix64 rng(seed);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < shots) {
      throw Error(Errc::InsufficientSamples, "class " + std::to_string(c) + " has " +
                                                 std::to_string(pool.size()) + " samples, " +
                                                 std::to_string(shots) + " requested");
    }
    // Partial Fisher–Yates: the first `shots` slots become the sample.
    for (std::size_t i = 0; i < shots; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      task.base_rows.push_back(pool[i]);
    }
  }

  if (use_flip_rows && train.flip_of) {
    std::vector<std::int64_t> flipped_of_source(train.count(), -1);
    for (std::size_t i = 0; i < train.count(); ++i) {
      const auto src = (*train.flip_of)[i];
      if (src >= 0 && flipped_of_source[static_cast<std::size_t>(src)] < 0) {
        flipped_of_source[static_cast<std::size_t>(src)] = static_cast<std::int64_t>(i);
      }
    }
    for (std::size_t row : task.base_rows) {
      if (flipped_of_source[row] >= 0) task.flip_rows.push_back(static_cast<std::size_t>(flipped_of_source[row]));
    }
  }

  std::vector<std::size_t> rows = task.base_rows;
  rows.insert(rows.end(), task.flip_rows.begin(), task.flip_rows.end());
  task.train_features = gather_rows(train.features, rows);
  task.train_labels.reserve(rows.size());
  for (std::size_t r : rows) task.train_labels.push_back(train.labels[r]);
  return task;
}

EmbeddingCache synth_generate(const SynthConfig& cfg) {
  if (cfg.dim < 2) throw Error(Errc::BadConfig, "synthetic dim must be at least 2");
  if (cfg.num_classes < 2) throw Error(Errc::BadConfig, "synthetic cache needs at least two classes");
  if (cfg.num_templates < 1) throw Error(Errc::BadConfig, "need at least one template");
  if (cfg.train_per_class < 1) throw Error(Errc::BadConfig, "need at least one train sample per class");
  if (cfg.noise_sigma < 0 || cfg.flip_sigma < 0 || cfg.template_sigma < 0 || cfg.gap_shift < 0 ||
      cfg.class_separation < 0 || cfg.class_separation > 1) {
    throw Error(Errc::BadConfig, "noise scales and gap_shift must be non-negative; separation in [0,1]");
  }

  const std::size_t d = cfg.dim;
  const std::size_t n = cfg.num_classes;
  SplitMix64 rng(cfg.seed);

  const auto common = random_unit(rng, d);
  std::vector<std::vector<double>> means(n);
  for (auto& mean : means) {
    const auto own = random_unit(rng, d);
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j)
      v[j] = (1.0 - cfg.class_separation) * common[j] + cfg.class_separation * own[j];
    mean = l2_normalize(v);
  }

  EmbeddingCache cache;
  cache.dim = d;
  cache.num_templates = cfg.num_templates;
  for (std::size_t k = 0; k < n; ++k) {
    std::string name = "class_";
    if (k < 10) name += '0';
    cache.class_names.push_back(name + std::to_string(k));
  }

  append_noisy_samples(cache.train, rng, means, cfg.train_per_class, cfg.noise_sigma);
  append_noisy_samples(cache.val, rng, means, std::min<std::size_t>(cfg.val_per_class, 200),
                       cfg.noise_sigma);
  append_noisy_samples(cache.test, rng, means, cfg.test_per_class, cfg.noise_sigma);

  if (cfg.with_flips) {
    const std::size_t originals = cache.train.count();
    Matrix features(2 * originals, d);
    std::vector<std::int32_t> flip_of(2 * originals, -1);
    std::vector<double> v(d);
    for (std::size_t i = 0; i < originals; ++i) {
      auto src = cache.train.features.row(i);
      std::copy(src.begin(), src.end(), features.row(i).begin());
      for (std::size_t j = 0; j < d; ++j) v[j] = src[j] + cfg.flip_sigma * rng.normal();
      put_unit_row(features, originals + i, v);
      flip_of[originals + i] = static_cast<std::int32_t>(i);
      cache.train.labels.push_back(cache.train.labels[i]);
    }
    cache.train.features = std::move(features);
    cache.train.flip_of = std::move(flip_of);
  }

  SplitMix64 rotation_rng(cfg.rotation_seed);
  const Matrix basis = random_orthogonal(rotation_rng, d);
  const auto shift = random_unit(rotation_rng, d);

  cache.text_features = Matrix(n * cfg.num_templates, d);
  std::vector<double> v(d);
  for (std::size_t k = 0; k < n; ++k) {
    const auto rotated = rotate(basis, cfg.rotation_angle, means[k]);
    for (std::size_t m = 0; m < cfg.num_templates; ++m) {
      for (std::size_t j = 0; j < d; ++j)
        v[j] = rotated[j] + cfg.gap_shift * shift[j] + cfg.template_sigma * rng.normal();
      put_unit_row(cache.text_features, k * cfg.num_templates + m, v);
    }
  }
  return cache;
}

}  // namespace cmm
