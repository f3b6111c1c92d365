#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "featedit/errors.hpp"
#include "featedit/matrix.hpp"

namespace featedit {

struct PcaOptions {
  std::size_t components = 2;
  double tolerance = 1e-12;  // relative change of the eigenvalue estimate
  std::size_t max_iterations = 10000;
};

struct PcaResult {
  Matrix projections;             // N x k, centered data times basis^T
  Matrix basis;                   // k x D, orthonormal rows
  std::vector<double> variances;  // k leading covariance eigenvalues, descending
  std::vector<double> mean;       // D
  std::vector<std::size_t> iterations;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double normalize(std::span<double> v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0)
    for (auto& x : v) x /= n;
  return n;
}

/// Removes the components of v along each (orthonormal) row of `basis[0..k)`.
inline void project_out(std::span<double> v, const Matrix& basis, std::size_t k) {
  for (std::size_t r = 0; r < k; ++r) {
    const auto b = basis.row(r);
    const double a = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= a * b[i];
  }
}

/// Deterministic, generically non-degenerate start vector.
inline void start_vector(std::span<double> v, std::uint64_t salt) {
  std::uint64_t x = 0x9E3779B97F4A7C15ull ^ (salt * 0xBF58476D1CE4E5B9ull);
  for (auto& e : v) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    e = 0.5 + static_cast<double>(x >> 11) * 0x1.0p-53;
  }
}

}  // namespace detail

/// Principal components via power iteration with deflation. Each successive
/// component is iterated in the orthogonal complement of the ones already
/// found. Covariance uses the population divisor N.
inline PcaResult pca_project(const Matrix& data, const PcaOptions& opt = {}) {
  const std::size_t n = data.rows(), dim = data.cols();
  if (n < 2) throw InsufficientDataError("PCA needs at least 2 rows");
  if (dim < 2) throw ShapeError("PCA needs at least 2 columns");
  if (opt.components == 0 || opt.components > dim)
    throw ShapeError("component count must be in [1, D]");
  for (double v : data.data())
    if (!std::isfinite(v)) throw ValueError("non-finite entry in PCA input");

  PcaResult res;
  res.mean.assign(dim, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) res.mean[c] += data(r, c);
  for (auto& m : res.mean) m /= static_cast<double>(n);

  Matrix centered(n, dim);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) centered(r, c) = data(r, c) - res.mean[c];

  Matrix cov(dim, dim);
  for (std::size_t a = 0; a < dim; ++a)
    for (std::size_t b = a; b < dim; ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += centered(r, a) * centered(r, b);
      cov(a, b) = cov(b, a) = s / static_cast<double>(n);
    }

  const std::size_t k = opt.components;
  res.basis = Matrix(k, dim);
  res.variances.assign(k, 0.0);
  res.iterations.assign(k, 0);
  std::vector<double> v(dim), w(dim);

  for (std::size_t comp = 0; comp < k; ++comp) {
    detail::start_vector(v, comp);
    detail::project_out(v, res.basis, comp);
    if (detail::normalize(v) == 0.0) {
      // The start vector fell inside the found subspace; use a unit axis outside it.
      for (std::size_t axis = 0; axis < dim; ++axis) {
        std::fill(v.begin(), v.end(), 0.0);
        v[axis] = 1.0;
        detail::project_out(v, res.basis, comp);
        if (detail::normalize(v) > 1e-8) break;
      }
    }

    double lambda = 0.0;
    std::size_t it = 0;
    for (; it < opt.max_iterations; ++it) {
      for (std::size_t a = 0; a < dim; ++a) w[a] = detail::dot(cov.row(a), v);
      detail::project_out(w, res.basis, comp);
      const double next = detail::dot(v, w);
      const double norm = detail::normalize(w);
      if (norm == 0.0) {
        lambda = 0.0;
        break;  // v spans the null space; it is already an eigenvector
      }
      v = w;
      const bool converged = std::abs(next - lambda) <= opt.tolerance * std::abs(next);
      lambda = next;
      if (converged && it > 0) break;
    }
    // Final re-orthogonalization keeps the basis orthonormal to rounding.
    detail::project_out(v, res.basis, comp);
    detail::normalize(v);

    std::size_t big = 0;
    for (std::size_t a = 1; a < dim; ++a)
      if (std::abs(v[a]) > std::abs(v[big])) big = a;
    if (v[big] < 0)
      for (auto& x : v) x = -x;

    std::copy(v.begin(), v.end(), res.basis.row(comp).begin());
    res.variances[comp] = std::max(lambda, 0.0);
    res.iterations[comp] = it;
  }

  res.projections = Matrix(n, k);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t comp = 0; comp < k; ++comp)
      res.projections(r, comp) = detail::dot(centered.row(r), res.basis.row(comp));
  return res;
}

/// CSV `sample_index,pc1,pc2,class_id`.
inline void write_pca_csv(std::ostream& out, const PcaResult& res,
                          std::span<const std::uint32_t> class_ids) {
  if (res.projections.cols() < 2) throw ShapeError("PCA export needs two components");
  if (class_ids.size() != res.projections.rows()) throw ShapeError("one class id per row required");
  out << "sample_index,pc1,pc2,class_id\n";
  char a[40], b[40];
  for (std::size_t r = 0; r < res.projections.rows(); ++r) {
    std::snprintf(a, sizeof a, "%.17g", res.projections(r, 0));
    std::snprintf(b, sizeof b, "%.17g", res.projections(r, 1));
    out << r << ',' << a << ',' << b << ',' << class_ids[r] << '\n';
  }
}

}  // namespace featedit
