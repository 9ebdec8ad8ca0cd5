/**
 * @file
 * @brief Linear algebra with respect to the weighted inner product (x, y)_M = y^T M x.
 *
 * The weight matrix M is symmetric positive definite. It is stored sparse and
 * factored once on construction, M = L L^T, with L lower triangular and no
 * reordering, so that L can be used directly to map R^m_M isometrically onto
 * the Euclidean R^m (||x||_M = ||L^T x||).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SVD>

#include "ipod/errors.hpp"

namespace ipod {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

namespace detail {

inline void require_same_size(Index a, Index b, const char* what) {
  if (a != b) {
    throw SizeError(std::string(what) + ": expected length " + std::to_string(b) +
                    ", got " + std::to_string(a));
  }
}

}  // namespace detail

/**
 * @brief Envelope (profile) Cholesky factorization M = L L^T without pivoting.
 *
 * Works on the lower triangle of @p m. Fill is confined to the row envelope,
 * so banded and tridiagonal matrices factor in linear time while dense input
 * degrades gracefully to the usual O(m^3) algorithm.
 *
 * @throws NotPositiveDefinite on the first pivot that is not strictly positive.
 */
inline SparseMatrix cholesky(const SparseMatrix& m) {
  const Index n = m.rows();
  if (m.cols() != n) throw SizeError("cholesky: matrix is not square");

  // first[i] is the leftmost stored column in row i of the lower triangle.
  std::vector<Index> first(n);
  for (Index i = 0; i < n; ++i) first[i] = i;
  for (Index col = 0; col < m.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
      const Index r = it.row(), c = it.col();
      if (r > c) first[r] = std::min(first[r], c);
      else if (c > r) first[c] = std::min(first[c], r);
    }
  }

  // Row i of L is stored densely over columns first[i]..i.
  std::vector<std::vector<double>> rows(n);
  for (Index i = 0; i < n; ++i) rows[i].assign(static_cast<std::size_t>(i - first[i] + 1), 0.0);
  for (Index col = 0; col < m.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
      Index r = it.row(), c = it.col();
      if (c > r) continue;  // lower triangle only
      rows[r][static_cast<std::size_t>(c - first[r])] = it.value();
    }
  }

  for (Index i = 0; i < n; ++i) {
    auto& row_i = rows[i];
    const Index fi = first[i];
    for (Index j = fi; j <= i; ++j) {
      const auto& row_j = rows[j];
      const Index fj = first[j];
      const Index start = std::max(fi, fj);
      double sum = row_i[static_cast<std::size_t>(j - fi)];
      for (Index q = start; q < j; ++q) {
        sum -= row_i[static_cast<std::size_t>(q - fi)] * row_j[static_cast<std::size_t>(q - fj)];
      }
      if (j < i) {
        row_i[static_cast<std::size_t>(j - fi)] = sum / row_j[static_cast<std::size_t>(j - fj)];
      } else {
        if (!(sum > 0.0)) throw NotPositiveDefinite(i, sum);
        row_i[static_cast<std::size_t>(i - fi)] = std::sqrt(sum);
      }
    }
  }

  std::vector<Eigen::Triplet<double>> triplets;
  for (Index i = 0; i < n; ++i) {
    for (Index j = first[i]; j <= i; ++j) {
      const double v = rows[i][static_cast<std::size_t>(j - first[i])];
      if (v != 0.0) triplets.emplace_back(i, j, v);
    }
  }
  SparseMatrix lower(n, n);
  lower.setFromTriplets(triplets.begin(), triplets.end());
  return lower;
}

/**
 * @brief Symmetric positive definite weight matrix with its cached Cholesky factor.
 *
 * Immutable after construction; copies share the factor.
 */
class WeightMatrix {
 public:
  /// @throws InvalidInput if @p entries is not exactly symmetric or has non-finite entries.
  /// @throws NotPositiveDefinite if the factorization breaks down.
  explicit WeightMatrix(SparseMatrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
      throw InvalidInput("weight matrix must be square and non-empty");
    }
    entries_.makeCompressed();
    for (Index col = 0; col < entries_.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(entries_, col); it; ++it) {
        if (!std::isfinite(it.value())) throw InvalidInput("weight matrix has non-finite entries");
        if (entries_.coeff(it.col(), it.row()) != it.value()) {
          throw InvalidInput("weight matrix is not symmetric at (" + std::to_string(it.row()) +
                             ", " + std::to_string(it.col()) + ")");
        }
      }
    }
    chol_ = std::make_shared<const SparseMatrix>(cholesky(entries_));
  }

  static WeightMatrix identity(Index m) {
    SparseMatrix eye(m, m);
    eye.setIdentity();
    return WeightMatrix(std::move(eye));
  }

  static WeightMatrix from_dense(const Matrix& dense) {
    return WeightMatrix(dense.sparseView(0.0, 0.0));
  }

  Index dim() const noexcept { return entries_.rows(); }
  const SparseMatrix& entries() const noexcept { return entries_; }
  /// Lower-triangular L with M = L L^T.
  const SparseMatrix& chol() const noexcept { return *chol_; }

  double max_diagonal() const {
    return entries_.diagonal().maxCoeff();
  }

  template <typename Derived>
  Matrix apply(const Eigen::MatrixBase<Derived>& x) const {
    detail::require_same_size(x.rows(), dim(), "WeightMatrix::apply");
    return entries_ * x;
  }

 private:
  SparseMatrix entries_;
  std::shared_ptr<const SparseMatrix> chol_;
};

/// (x, y)_M = y^T M x.
inline double m_inner(const Vector& x, const Vector& y, const WeightMatrix& m) {
  detail::require_same_size(x.size(), m.dim(), "m_inner(x)");
  detail::require_same_size(y.size(), m.dim(), "m_inner(y)");
  return y.dot(m.entries() * x);
}

/// (|x^T M x|)^{1/2}; the absolute value guards against tiny negative round-off.
inline double m_norm(const Vector& x, const WeightMatrix& m) {
  detail::require_same_size(x.size(), m.dim(), "m_norm");
  return std::sqrt(std::abs(x.dot(m.entries() * x)));
}

/// max |V^T M V - I|.
inline double orthonormality_error(const Matrix& v, const WeightMatrix& m) {
  detail::require_same_size(v.rows(), m.dim(), "orthonormality_error");
  if (v.cols() == 0) return 0.0;
  const Matrix gram = v.transpose() * (m.entries() * v);
  return (gram - Matrix::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
}

/// max |W^T W - I| for a Euclidean-orthonormal factor.
inline double orthonormality_error(const Matrix& w) {
  if (w.cols() == 0) return 0.0;
  return (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).cwiseAbs().maxCoeff();
}

inline double default_orth_tol(Index k) { return 1e-10 * static_cast<double>(std::max<Index>(k, 1)); }

/**
 * @brief Modified Gram-Schmidt in the M inner product, two full passes per column.
 *
 * Column i is rejected as rank deficient when its M-norm after projection
 * falls below @p rank_tol times its original M-norm.
 *
 * @throws RankDeficient with the zero-based index of the offending column.
 */
inline Matrix modified_gram_schmidt_weighted(Matrix v, const WeightMatrix& m,
                                             double rank_tol = 1e-14) {
  detail::require_same_size(v.rows(), m.dim(), "modified_gram_schmidt_weighted");
  const Index k = v.cols();
  Matrix mv(v.rows(), k);  // M times the finished columns
  for (Index i = 0; i < k; ++i) {
    const double original = m_norm(v.col(i), m);
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j = 0; j < i; ++j) {
        const double r = mv.col(j).dot(v.col(i));
        v.col(i) -= r * v.col(j);
      }
    }
    const double norm = m_norm(v.col(i), m);
    if (!(norm > rank_tol * original) || norm == 0.0) throw RankDeficient(i);
    v.col(i) /= norm;
    mv.col(i) = m.entries() * v.col(i);
  }
  return v;
}

/// Largest singular value of a dense matrix (Eigen divide-and-conquer SVD, values only).
inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  if (a.rows() < a.cols()) return spectral_norm(a.transpose());
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

/**
 * @brief Operator norm of A : R^n -> R^m_M, i.e. sup_{||x|| = 1} ||A x||_M.
 *
 * Evaluated as the largest singular value of L^T A.
 */
inline double weighted_operator_norm(const Matrix& a, const WeightMatrix& m) {
  detail::require_same_size(a.rows(), m.dim(), "weighted_operator_norm");
  if (a.size() == 0) return 0.0;
  const Matrix scaled = m.chol().transpose() * a;
  return spectral_norm(scaled);
}

}  // namespace ipod
