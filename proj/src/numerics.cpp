// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cmm/error.hpp"

namespace cmm {

namespace {

constexpr int kMaxJacobiSweeps = 100;
constexpr double kJacobiTolerance = 1e-12;
constexpr double kSymmetryTolerance = 1e-10;
constexpr double kNegativeEigenTolerance = 1e-6;

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

// Applies the (p, q) rotation that annihilates a(p, q): A ← JᵀAJ, V ← VJ.
void jacobi_rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();

  for (std::size_t k = 0; k < n; ++k) {
    const double akp = a(k, p);
    const double akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double apk = a(p, k);
    const double aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = norm2(v);
  if (!(n >= kZeroNormThreshold)) {
    throw Error(Errc::ZeroNorm, "vector norm " + std::to_string(n) + " below threshold");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

std::vector<double> normalize_rows(Matrix& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double n = norm2(row);
    if (!(n >= kZeroNormThreshold)) {
      throw Error(Errc::ZeroNorm, "row " + std::to_string(r) + " has zero norm");
    }
    for (double& x : row) x /= n;
    norms[r] = n;
  }
  return norms;
}

std::vector<double> normalize_columns(Matrix& m) {
  std::vector<double> norms(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) norms[c] += m(r, c) * m(r, c);
  for (std::size_t c = 0; c < m.cols(); ++c) {
    norms[c] = std::sqrt(norms[c]);
    if (!(norms[c] >= kZeroNormThreshold)) {
      throw Error(Errc::ZeroNorm, "column " + std::to_string(c) + " has zero norm");
    }
  }
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) /= norms[c];
  return norms;
}

EigResult sym_eig(const Matrix& input) {
  if (input.rows() != input.cols()) {
    throw Error(Errc::DimMismatch, "eigendecomposition needs a square matrix");
  }
  const std::size_t n = input.rows();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  const double scale = frobenius_norm(a);
  const double target = kJacobiTolerance * scale;
  bool converged = scale == 0.0;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
    if (off_diagonal_norm(a) <= target) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (a(p, q) != 0.0) jacobi_rotate(a, v, p, q);
  }
  if (!converged && off_diagonal_norm(a) > target) {
    throw Error(Errc::NotConverged, "Jacobi iteration did not converge");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigResult result{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    result.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) result.vectors(r, k) = v(r, order[k]);
  }
  return result;
}

Matrix psd_sqrt(const Matrix& a) {
  if (a.rows() != a.cols()) throw Error(Errc::DimMismatch, "psd_sqrt needs a square matrix");
  const double scale = frobenius_norm(a);
  const double sym_tol = kSymmetryTolerance * std::max(1.0, scale);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > sym_tol) {
        throw Error(Errc::NotSymmetric, "entries (" + std::to_string(i) + "," + std::to_string(j) +
                                            ") differ from their transpose");
      }

  EigResult eig = sym_eig(a);
  const std::size_t n = a.rows();
  std::vector<double> roots(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lambda = eig.values[k];
    if (lambda < -kNegativeEigenTolerance * scale) {
      throw Error(Errc::NotPSD, "eigenvalue " + std::to_string(lambda) + " is negative");
    }
    roots[k] = std::sqrt(std::max(lambda, 0.0));
  }

  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += eig.vectors(i, k) * roots[k] * eig.vectors(j, k);
      s(i, j) = acc;
      s(j, i) = acc;
    }
  return s;
}

std::vector<double> column_mean(const Matrix& points) {
  std::vector<double> mean(points.cols(), 0.0);
  if (points.rows() == 0) return mean;
  for (std::size_t r = 0; r < points.rows(); ++r) {
    auto row = points.row(r);
    for (std::size_t c = 0; c < points.cols(); ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(points.rows());
  return mean;
}

Matrix covariance_mle(const Matrix& points, std::span<const double> mean) {
  const std::size_t d = points.cols();
  Matrix cov(d, d);
  std::vector<double> centred(d);
  for (std::size_t r = 0; r < points.rows(); ++r) {
    auto row = points.row(r);
    for (std::size_t c = 0; c < d; ++c) centred[c] = row[c] - mean[c];
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = centred[i];
      for (std::size_t j = i; j < d; ++j) cov(i, j) += ci * centred[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(points.rows());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) *= inv_n;
      cov(j, i) = cov(i, j);
    }
  return cov;
}

PcaResult pca_project(const Matrix& points, std::size_t target_dim) {
  if (points.rows() < 2) throw Error(Errc::BadConfig, "PCA needs at least two points");
  if (target_dim == 0 || target_dim > std::min(points.rows() - 1, points.cols())) {
    throw Error(Errc::BadConfig, "PCA target dimension " + std::to_string(target_dim) +
                                     " outside [1, min(rows-1, cols)]");
  }
  PcaResult out;
  out.mean = column_mean(points);
  const Matrix cov = covariance_mle(points, out.mean);
  out.total_variance = trace(cov);
  if (!(out.total_variance > 0.0)) {
    throw Error(Errc::DegenerateData, "points have zero total variance");
  }

  EigResult eig = sym_eig(cov);
  const std::size_t d = points.cols();
  out.basis = Matrix(d, target_dim);
  out.explained_variance.assign(eig.values.begin(), eig.values.begin() + target_dim);
  for (std::size_t k = 0; k < target_dim; ++k) {
    // Sign convention: largest-magnitude component positive, so bases are reproducible.
    std::size_t arg = 0;
    for (std::size_t r = 1; r < d; ++r)
      if (std::abs(eig.vectors(r, k)) > std::abs(eig.vectors(arg, k))) arg = r;
    const double sign = eig.vectors(arg, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < d; ++r) out.basis(r, k) = sign * eig.vectors(r, k);
  }

  Matrix centred = points;
  for (std::size_t r = 0; r < centred.rows(); ++r) {
    auto row = centred.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] -= out.mean[c];
  }
  out.projected = matmul(centred, out.basis);
  return out;
}

}  // namespace cmm
