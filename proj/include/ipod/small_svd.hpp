/**
 * @file
 * @brief Full SVD of the small bordered matrices that drive each incremental update.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ipod/weighted_linalg.hpp"

namespace ipod {

/// Q = left * diag(sigma) * right^T with square orthogonal factors, sigma descending.
struct SmallSvd {
  Matrix left;
  Vector sigma;
  Matrix right;
};

/**
 * @brief One-sided (Hestenes) Jacobi SVD of a square matrix.
 *
 * The rotations act on the columns of Q^T, i.e. on the rows of Q. They are
 * accumulated into the left factor, which is therefore orthogonal to working
 * precision even for strongly graded singular values, and a zero row of Q is
 * never touched: its unit vector survives exactly as a left singular vector.
 * Right vectors are the normalized rotated columns; exactly-zero columns are
 * completed to an orthonormal basis.
 *
 * @throws InvalidInput if Q is not square or contains non-finite entries.
 */
inline SmallSvd small_svd(const Matrix& q) {
  if (q.rows() != q.cols()) throw InvalidInput("small_svd: matrix must be square");
  if (!q.allFinite()) throw InvalidInput("small_svd: non-finite entries");
  const Index n = q.rows();

  Matrix b = q.transpose();
  Matrix rot = Matrix::Identity(n, n);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr int max_sweeps = 80;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index r = p + 1; r < n; ++r) {
        const double alpha = b.col(p).squaredNorm();
        const double beta = b.col(r).squaredNorm();
        const double gamma = b.col(p).dot(b.col(r));
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Index i = 0; i < n; ++i) {
          const double bp = b(i, p), br = b(i, r);
          b(i, p) = c * bp - s * br;
          b(i, r) = s * bp + c * br;
          const double vp = rot(i, p), vr = rot(i, r);
          rot(i, p) = c * vp - s * vr;
          rot(i, r) = s * vp + c * vr;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(n);
  for (Index i = 0; i < n; ++i) norms(i) = b.col(i).norm();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index c) { return norms(a) > norms(c); });

  SmallSvd out{Matrix(n, n), Vector(n), Matrix::Zero(n, n)};
  std::vector<Index> missing;
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    out.left.col(i) = rot.col(src);
    out.sigma(i) = norms(src);
    if (norms(src) > 0.0 && std::isfinite(1.0 / norms(src))) {
      out.right.col(i) = b.col(src) / norms(src);
    } else {
      missing.push_back(i);
    }
  }

  // Complete the right factor with the unit vectors least represented so far.
  for (Index slot : missing) {
    Vector best;
    double best_norm = -1.0;
    for (Index e = 0; e < n; ++e) {
      Vector cand = Vector::Unit(n, e);
      for (int pass = 0; pass < 2; ++pass) {
        for (Index j = 0; j < n; ++j) {
          if (out.right.col(j).squaredNorm() == 0.0) continue;
          cand -= out.right.col(j).dot(cand) * out.right.col(j);
        }
      }
      const double cn = cand.norm();
      if (cn > best_norm) {
        best_norm = cn;
        best = cand;
      }
    }
    out.right.col(slot) = best / best_norm;
  }
  return out;
}

}  // namespace ipod
