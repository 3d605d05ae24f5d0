#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "kdep/errors.hpp"
#include "kdep/matrix.hpp"

namespace kdep {

// Top-k right singular vectors and singular values of a feature matrix.
//
// Conventions (fixed so that two runs, or two implementations, agree
// bit-for-bit):
//   - singular_values sorted nonincreasing; values equal within 1e-12
//     keep their original computation order,
//   - in every column of right_vectors the entry of largest absolute
//     value is nonnegative (ties resolved toward the lowest index),
//   - directions with zero singular value are replaced by canonical
//     basis vectors not already spanned, lowest index first,
//     orthonormalized against the retained columns.
struct SvdFactors {
  std::vector<double> singular_values;  // length k
  FeatureMatrix right_vectors;          // D x k, orthonormal columns
  std::size_t k = 0;
};

namespace detail {

constexpr int kJacobiSweepLimit = 30;
constexpr double kJacobiTol = 1e-12;
constexpr double kSingularTieTol = 1e-12;

// Cyclic Jacobi diagonalization of a symmetric matrix held in `g`
// (row-major d x d). Eigenvectors accumulate into `v` (initialized to
// identity here). Returns false if the sweep limit is exhausted before
// every off-diagonal entry falls under the relative threshold.
inline bool jacobi_eigen_symmetric(std::vector<double>& g,
                                   std::vector<double>& v, std::size_t d) {
  v.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  if (d == 1) return true;

  auto converged_pair = [&](std::size_t p, std::size_t q) {
    const double app = std::max(g[p * d + p], 0.0);
    const double aqq = std::max(g[q * d + q], 0.0);
    const double thresh = kJacobiTol * std::sqrt(app * aqq);
    return std::fabs(g[p * d + q]) <= thresh;
  };

  for (int sweep = 0; sweep < kJacobiSweepLimit; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        if (converged_pair(p, q)) continue;
        rotated = true;

        const double app = g[p * d + p];
        const double aqq = g[q * d + q];
        const double apq = g[p * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        g[p * d + p] = app - t * apq;
        g[q * d + q] = aqq + t * apq;
        g[p * d + q] = 0.0;
        g[q * d + p] = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          if (i == p || i == q) continue;
          const double gip = g[i * d + p];
          const double giq = g[i * d + q];
          g[i * d + p] = c * gip - s * giq;
          g[p * d + i] = g[i * d + p];
          g[i * d + q] = s * gip + c * giq;
          g[q * d + i] = g[i * d + q];
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double vip = v[i * d + p];
          const double viq = v[i * d + q];
          v[i * d + p] = c * vip - s * viq;
          v[i * d + q] = s * vip + c * viq;
        }
      }
    }
    if (!rotated) return true;
  }

  for (std::size_t p = 0; p + 1 < d; ++p) {
    for (std::size_t q = p + 1; q < d; ++q) {
      if (!converged_pair(p, q)) return false;
    }
  }
  return true;
}

// Flip a column so its largest-magnitude entry is nonnegative. A strict
// `>` comparison makes the lowest index win exact magnitude ties.
inline void apply_sign_convention(FeatureMatrix& vecs, std::size_t col) {
  std::size_t arg = 0;
  double best = std::fabs(vecs(0, col));
  for (std::size_t i = 1; i < vecs.rows(); ++i) {
    const double a = std::fabs(vecs(i, col));
    if (a > best) {
      best = a;
      arg = i;
    }
  }
  if (vecs(arg, col) < 0.0) {
    for (std::size_t i = 0; i < vecs.rows(); ++i) vecs(i, col) = -vecs(i, col);
  }
}

}  // namespace detail

inline SvdFactors svd_topk(const FeatureMatrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (k < 1 || k > d) {
    throw DimensionError("svd_topk: k must lie in [1, cols]");
  }
  if (!x.all_finite()) {
    throw NumericError("svd_topk: input contains NaN or Inf");
  }

  // Gram form: G = X^T X is d x d, so the cost of diagonalization is
  // independent of the sample count.
  std::vector<double> g(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < d; ++p) {
      const double xip = x(i, p);
      if (xip == 0.0) continue;
      for (std::size_t q = p; q < d; ++q) {
        g[p * d + q] += xip * x(i, q);
      }
    }
  }
  for (std::size_t p = 0; p < d; ++p) {
    for (std::size_t q = 0; q < p; ++q) g[p * d + q] = g[q * d + p];
  }

  std::vector<double> v;
  if (!detail::jacobi_eigen_symmetric(g, v, d)) {
    throw NumericError("svd_topk: Jacobi sweeps did not converge");
  }

  std::vector<double> sigma(d);
  for (std::size_t j = 0; j < d; ++j) {
    sigma[j] = std::sqrt(std::max(g[j * d + j], 0.0));
  }

  // Order: descending by value, original index breaking exact ties; then
  // restore index order inside groups that are equal within tolerance.
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sigma[a] != sigma[b]) return sigma[a] > sigma[b];
    return a < b;
  });
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i = 1; i < d; ++i) {
      if (std::fabs(sigma[order[i]] - sigma[order[i - 1]]) <=
              detail::kSingularTieTol &&
          order[i] < order[i - 1]) {
        std::swap(order[i], order[i - 1]);
        moved = true;
      }
    }
  }

  SvdFactors out;
  out.k = k;
  out.singular_values.resize(k);
  out.right_vectors = FeatureMatrix(d, k);

  const double sigma_max = sigma[order[0]];
  const double zero_tol = detail::kSingularTieTol * std::max(1.0, sigma_max);

  std::size_t next_canonical = 0;
  std::vector<std::size_t> kept_cols;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t src = order[c];
    if (sigma[src] > zero_tol) {
      out.singular_values[c] = sigma[src];
      for (std::size_t i = 0; i < d; ++i) {
        out.right_vectors(i, c) = v[i * d + src];
      }
    } else {
      // Canonical completion for the null directions.
      out.singular_values[c] = 0.0;
      std::vector<double> resid(d, 0.0);
      bool placed = false;
      for (; next_canonical < d && !placed; ++next_canonical) {
        std::fill(resid.begin(), resid.end(), 0.0);
        resid[next_canonical] = 1.0;
        for (std::size_t kc : kept_cols) {
          double dot = out.right_vectors(next_canonical, kc);
          for (std::size_t i = 0; i < d; ++i) {
            resid[i] -= dot * out.right_vectors(i, kc);
          }
        }
        double norm2 = 0.0;
        for (double r : resid) norm2 += r * r;
        if (norm2 > 1e-6) {
          const double inv = 1.0 / std::sqrt(norm2);
          for (std::size_t i = 0; i < d; ++i) {
            out.right_vectors(i, c) = resid[i] * inv;
          }
          placed = true;
        }
      }
      if (!placed) {
        throw NumericError("svd_topk: canonical completion exhausted");
      }
    }
    detail::apply_sign_convention(out.right_vectors, c);
    kept_cols.push_back(c);
  }
  return out;
}

}  // namespace kdep
