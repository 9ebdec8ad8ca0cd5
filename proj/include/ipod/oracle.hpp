/**
 * @file
 * @brief Batch (exact) weighted SVD and exact error evaluation.
 *
 * These routines materialize the whole data matrix and exist to check the
 * streaming results. They share no code path with the incremental update:
 * the SVD here is Eigen's divide-and-conquer solver applied to L^T U.
 */
#pragma once

#include <vector>

#include <Eigen/SVD>

#include "ipod/incremental_svd.hpp"
#include "ipod/weighted_linalg.hpp"

namespace ipod {

/// Core SVD U = V diag(sigma) W^T with V^T M V = I and W^T W = I.
struct ExactSvd {
  Matrix modes;
  Vector sigma;
  Matrix right;
};

/// Relative threshold below which computed singular values are treated as zero.
inline constexpr double kZeroSingularValue = 1e-14;

/**
 * @brief Weighted SVD through the Cholesky factor: S = L^T U = V^ Sigma W^T, V = L^{-T} V^.
 */
inline ExactSvd exact_weighted_svd(const Matrix& u, const WeightMatrix& m) {
  detail::require_same_size(u.rows(), m.dim(), "exact_weighted_svd");
  if (u.cols() == 0) throw InvalidInput("exact_weighted_svd: matrix has no columns");
  const Matrix scaled = m.chol().transpose() * u;
  Eigen::BDCSVD<Matrix> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Index k = 0;
  const double cutoff = s.size() ? kZeroSingularValue * s(0) : 0.0;
  while (k < s.size() && s(k) > cutoff) ++k;

  ExactSvd out;
  out.sigma = s.head(k);
  out.right = svd.matrixV().leftCols(k);
  out.modes = m.chol().transpose().triangularView<Eigen::Upper>().solve(
      Matrix(svd.matrixU().leftCols(k)));
  return out;
}

/// ||U - U~||_{L(R^n, R^m_M)} with U~ = reconstruct(state).
inline double exact_error(const Matrix& u, const SvdState& state, const WeightMatrix& m) {
  detail::require_same_size(u.rows(), m.dim(), "exact_error(rows)");
  const Matrix approx = reconstruct(state);
  detail::require_same_size(u.cols(), approx.cols(), "exact_error(columns)");
  return weighted_operator_norm(u - approx, m);
}

struct SweepRow {
  Tolerances tols;
  Index rank = 0;
  double exact_error = 0.0;
  double incr_error_bound = 0.0;
  std::uint64_t p_truncations = 0;
  std::uint64_t sv_truncations = 0;
};

/// Runs the streaming algorithm over @p snapshots (columns in order) once for a tolerance pair.
inline SvdState run_stream(const Matrix& snapshots, const WeightMatrix& m, const Tolerances& tols,
                           const UpdateOptions& options = {}) {
  if (snapshots.cols() == 0) throw InvalidInput("empty snapshot stream");
  IncrementalPod pod(m, tols, options);
  for (Index j = 0; j < snapshots.cols(); ++j) {
    if (!pod.push(snapshots.col(j))) {
      throw ZeroColumn("snapshot stream starts with a zero column (index " + std::to_string(j) +
                       ")");
    }
  }
  return pod.state();
}

/**
 * @brief One row (rank, exact error, incremental bound) per tolerance pair.
 *
 * The stream must be held in memory, since the exact error needs all of U.
 */
inline std::vector<SweepRow> tolerance_sweep(const Matrix& snapshots, const WeightMatrix& m,
                                             const std::vector<Tolerances>& grid) {
  if (snapshots.cols() == 0) throw InvalidInput("tolerance_sweep: empty snapshot stream");
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const auto& tols : grid) {
    const SvdState state = run_stream(snapshots, m, tols);
    SweepRow row;
    row.tols = tols;
    row.rank = state.rank();
    row.exact_error = exact_error(snapshots, state, m);
    row.incr_error_bound = state.error_bound;
    row.p_truncations = state.p_truncations;
    row.sv_truncations = state.sv_truncations;
    rows.push_back(row);
  }
  return rows;
}

/// The {1e-8, 1e-10, 1e-12}^2 grid, ordered by tol then tol_sv.
inline std::vector<Tolerances> standard_tolerance_grid() {
  std::vector<Tolerances> grid;
  for (double tol : {1e-8, 1e-10, 1e-12}) {
    for (double tol_sv : {1e-8, 1e-10, 1e-12}) grid.push_back({tol, tol_sv});
  }
  return grid;
}

}  // namespace ipod
