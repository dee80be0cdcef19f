// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmm/matrix.hpp"

namespace cmm {

/// Norms below this are treated as zero by every normalizing routine.
inline constexpr double kZeroNormThreshold = 1e-12;

/// v / ‖v‖₂. Throws Errc::ZeroNorm when ‖v‖₂ < 1e-12.
std::vector<double> l2_normalize(std::span<const double> v);

/// Normalizes each row in place; returns the pre-normalization norms.
std::vector<double> normalize_rows(Matrix& m);

/// Normalizes each column in place; returns the pre-normalization norms.
std::vector<double> normalize_columns(Matrix& m);

/// Eigen-decomposition of a symmetric matrix. Eigenvalues are sorted in
/// descending order and `vectors` holds the matching orthonormal eigenvectors
/// as columns.
struct EigResult {
  std::vector<double> values;
  Matrix vectors;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass drops below
/// 1e-12·‖A‖_F. Only the symmetric part of the input is meaningful.
EigResult sym_eig(const Matrix& a);

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues in [-1e-6·‖A‖, 0) are clamped to zero; anything more negative
/// raises Errc::NotPSD.
Matrix psd_sqrt(const Matrix& a);

std::vector<double> column_mean(const Matrix& points);

/// Maximum-likelihood (1/n) covariance of the rows of `points` about `mean`.
Matrix covariance_mle(const Matrix& points, std::span<const double> mean);

struct PcaResult {
  Matrix projected;  ///< [rows × target_dim] centred coordinates
  Matrix basis;      ///< [cols × target_dim] orthonormal principal directions
  std::vector<double> mean;
  std::vector<double> explained_variance;  ///< top target_dim covariance eigenvalues
  double total_variance = 0.0;
};

/// Projects rows onto the top-variance principal directions. Requires at least
/// two rows and target_dim ≤ min(rows−1, cols); throws Errc::DegenerateData
/// when the points carry no variance at all.
PcaResult pca_project(const Matrix& points, std::size_t target_dim);

}  // namespace cmm
