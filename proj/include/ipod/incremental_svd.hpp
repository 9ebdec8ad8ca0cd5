/**
 * @file
 * @brief Streaming SVD with respect to a weighted inner product, with a running error bound.
 *
 * The state holds a core SVD U~ = V diag(sigma) W^T of an approximation U~ of
 * the data seen so far, where V^T M V = I and W^T W = I. Each update appends
 * one column, applies the residual (p) truncation and the singular value
 * truncation, and adds the operator-norm error of each truncation to the
 * bound e, so that ||U - U~|| <= e in exact arithmetic.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "ipod/small_svd.hpp"
#include "ipod/weighted_linalg.hpp"

namespace ipod {

/// Truncation thresholds: p-truncation (tol) and singular-value truncation (tol_sv).
struct Tolerances {
  double tol = 1e-10;
  double tol_sv = 1e-10;

  void validate() const {
    if (!(tol > 0.0) || !(tol_sv > 0.0)) throw InvalidInput("tolerances must be positive");
  }
};

/// Threshold used when deciding whether V needs reorthogonalization.
enum class OrthoThreshold {
  min_tol_tol_m,  ///< min(tol, tol * m), as written in the published algorithm
  max_tol_tol_m,  ///< max(tol, tol * m)
};

struct UpdateOptions {
  bool keep_right = true;  ///< maintain W; only needed for reconstruction
  /// Project the residual c - V d a second time and fold the correction into d.
  /// A no-op in exact arithmetic; without it, orthogonality of V is lost at a
  /// rate of ||c||_M / p per rank-increasing step when p is small.
  bool reproject_residual = true;
  OrthoThreshold ortho = OrthoThreshold::min_tol_tol_m;
};

struct SvdState {
  Matrix modes;   ///< V, m x k, M-orthonormal
  Vector sigma;   ///< k positive values, nonincreasing
  Matrix right;   ///< W, n x k; 0 x k when right vectors are not tracked
  std::uint64_t columns = 0;  ///< n
  double error_bound = 0.0;   ///< e
  double error_compensation = 0.0;  ///< Kahan carry for e
  std::uint64_t p_truncations = 0;
  std::uint64_t sv_truncations = 0;
  bool tracks_right = true;

  Index rank() const noexcept { return sigma.size(); }
  Index dim() const noexcept { return modes.rows(); }

  bool operator==(const SvdState&) const = default;
};

struct UpdateReport {
  double p = 0.0;       ///< ||c - V V^* c||_M
  Vector d;             ///< V^T M c
  double e_p = 0.0;
  double e_sv = 0.0;
  Index retained_rank = 0;
  bool rank_grew = false;
  bool reorthogonalized = false;
};

namespace detail {

inline void kahan_add(double& sum, double& carry, double term) {
  const double y = term - carry;
  const double t = sum + y;
  carry = (t - sum) - y;
  sum = t;
}

inline void require_finite(const Vector& c) {
  if (!c.allFinite()) throw InvalidInput("snapshot column has non-finite entries");
}

}  // namespace detail

/// Columns whose M-norm is at or below this cannot seed a stream.
inline double init_tolerance(const WeightMatrix& m) {
  return 1e-14 * std::sqrt(m.max_diagonal());
}

/**
 * @brief Exact rank-one SVD of the first column: sigma = ||c||_M, V = c / sigma, W = [1], e = 0.
 * @throws ZeroColumn if ||c||_M <= init_tolerance(M); callers may skip the column.
 */
inline SvdState initialize(const Vector& c, const WeightMatrix& m,
                           const UpdateOptions& options = {}) {
  detail::require_same_size(c.size(), m.dim(), "initialize");
  detail::require_finite(c);
  const double norm = m_norm(c, m);
  if (!(norm > init_tolerance(m))) {
    throw ZeroColumn("initial column has M-norm " + std::to_string(norm));
  }
  SvdState s;
  s.modes = c / norm;
  s.sigma = Vector::Constant(1, norm);
  s.tracks_right = options.keep_right;
  s.right = options.keep_right ? Matrix::Ones(1, 1) : Matrix(0, 1);
  s.columns = 1;
  return s;
}

/**
 * @brief Appends column @p c to the decomposition held in @p state.
 *
 * Steps, in order: residual and projection coefficients (optionally
 * reprojected once); bordered matrix Q
 * (with its corner zeroed when p < tol); SVD of Q; rank-preserving update when
 * p < tol or k >= m, otherwise rank-increasing update; trailing singular value
 * truncation at tol_sv; reorthogonalization of V when the first and last
 * columns have drifted; e += e_p + e_sv.
 */
inline UpdateReport update(SvdState& state, const Vector& c, const WeightMatrix& m,
                           const Tolerances& tols, const UpdateOptions& options = {}) {
  tols.validate();
  detail::require_same_size(c.size(), m.dim(), "update");
  detail::require_same_size(state.dim(), m.dim(), "update(state)");
  detail::require_finite(c);
  if (state.rank() == 0) throw InvalidInput("update: state is not initialized");

  const Index k = state.rank();
  const Index dim = m.dim();
  const bool keep_right = state.tracks_right;

  UpdateReport report;
  report.d = state.modes.transpose() * (m.entries() * c);
  Vector h = c - state.modes * report.d;
  if (options.reproject_residual) {
    const Vector correction = state.modes.transpose() * (m.entries() * h);
    h -= state.modes * correction;
    report.d += correction;
  }
  report.p = m_norm(h, m);
  const bool p_truncated = report.p < tols.tol;

  Matrix q = Matrix::Zero(k + 1, k + 1);
  q.topLeftCorner(k, k).diagonal() = state.sigma;
  q.col(k).head(k) = report.d;
  q(k, k) = p_truncated ? 0.0 : report.p;

  const SmallSvd qsvd = small_svd(q);

  // [W 0; 0 1] * X for X with k + 1 rows.
  auto extend_right = [&](const Matrix& x) {
    Matrix out(state.right.rows() + 1, x.cols());
    out.topRows(state.right.rows()).noalias() = state.right * x.topRows(k);
    out.bottomRows(1) = x.bottomRows(1);
    return out;
  };

  if (p_truncated || k >= dim) {
    state.modes = state.modes * qsvd.left.topLeftCorner(k, k);
    state.sigma = qsvd.sigma.head(k);
    if (keep_right) state.right = extend_right(qsvd.right.leftCols(k));
    report.e_p = report.p;
  } else {
    Matrix basis(dim, k + 1);
    basis.leftCols(k) = state.modes;
    basis.col(k) = h / report.p;
    state.modes = basis * qsvd.left;
    state.sigma = qsvd.sigma;
    if (keep_right) state.right = extend_right(qsvd.right);
    report.rank_grew = true;
    report.e_p = 0.0;
  }
  if (!keep_right) state.right.resize(0, state.sigma.size());

  // Singular value truncation: keep the leading values above tol_sv, never fewer than one.
  const Index current = state.sigma.size();
  Index first_small = current;
  for (Index i = 0; i < current; ++i) {
    if (state.sigma(i) <= tols.tol_sv) {
      first_small = i;
      break;
    }
  }
  const Index keep = std::max<Index>(first_small, 1);
  if (keep < current) {
    report.e_sv = state.sigma(keep);
    state.sigma.conservativeResize(keep);
    state.modes.conservativeResize(Eigen::NoChange, keep);
    state.right.conservativeResize(Eigen::NoChange, keep);
  }
  report.retained_rank = state.sigma.size();

  const double m_scaled = tols.tol * static_cast<double>(dim);
  const double threshold = options.ortho == OrthoThreshold::min_tol_tol_m
                               ? std::min(tols.tol, m_scaled)
                               : std::max(tols.tol, m_scaled);
  const Index last = state.modes.cols() - 1;
  const double drift = std::abs(m_inner(state.modes.col(0), state.modes.col(last), m));
  if (drift > threshold) {
    state.modes = modified_gram_schmidt_weighted(std::move(state.modes), m);
    report.reorthogonalized = true;
  }

  detail::kahan_add(state.error_bound, state.error_compensation, report.e_p);
  detail::kahan_add(state.error_bound, state.error_compensation, report.e_sv);
  if (report.e_p > 0.0) ++state.p_truncations;
  if (report.e_sv > 0.0) ++state.sv_truncations;
  ++state.columns;
  return report;
}

/// Accumulated bound e on ||U - V diag(sigma) W^T|| in the L(R^n, R^m_M) norm.
inline double error_bound(const SvdState& state) noexcept { return state.error_bound; }

/// V diag(sigma) W^T.
/// @throws InvalidInput when right singular vectors were not tracked.
inline Matrix reconstruct(const SvdState& state) {
  if (!state.tracks_right || state.right.rows() != static_cast<Index>(state.columns)) {
    throw InvalidInput("reconstruct: right singular vectors were not tracked");
  }
  return state.modes * state.sigma.asDiagonal() * state.right.transpose();
}

struct PodOutput {
  Matrix modes;
  Vector eigenvalues;
};

/// POD modes are the columns of V; POD eigenvalues are sigma squared.
inline PodOutput pod_output(const SvdState& state) {
  return {state.modes, state.sigma.array().square().matrix()};
}

/**
 * @brief Convenience driver binding a weight matrix and tolerances to one stream.
 *
 * Leading columns with zero M-norm are skipped until one can seed the state.
 */
class IncrementalPod {
 public:
  IncrementalPod(WeightMatrix weights, Tolerances tols, UpdateOptions options = {})
      : weights_(std::move(weights)), tols_(tols), options_(options) {
    tols_.validate();
  }

  IncrementalPod(WeightMatrix weights, Tolerances tols, SvdState state, UpdateOptions options = {})
      : IncrementalPod(std::move(weights), tols, options) {
    detail::require_same_size(state.dim(), weights_.dim(), "IncrementalPod(state)");
    state_ = std::move(state);
    initialized_ = state_.rank() > 0;
  }

  /// Returns false when the column was skipped because no state exists yet and it is zero.
  bool push(const Vector& c, UpdateReport* report = nullptr) {
    if (!initialized_) {
      try {
        state_ = initialize(c, weights_, options_);
      } catch (const ZeroColumn&) {
        ++skipped_;
        return false;
      }
      initialized_ = true;
      if (report) {
        *report = UpdateReport{};
        report->p = state_.sigma(0);
        report->retained_rank = 1;
        report->rank_grew = true;
      }
      return true;
    }
    UpdateReport r = update(state_, c, weights_, tols_, options_);
    if (report) *report = std::move(r);
    return true;
  }

  bool initialized() const noexcept { return initialized_; }
  const SvdState& state() const noexcept { return state_; }
  const WeightMatrix& weights() const noexcept { return weights_; }
  const Tolerances& tolerances() const noexcept { return tols_; }
  std::uint64_t skipped() const noexcept { return skipped_; }

 private:
  WeightMatrix weights_;
  Tolerances tols_;
  UpdateOptions options_;
  SvdState state_;
  bool initialized_ = false;
  std::uint64_t skipped_ = 0;
};

}  // namespace ipod
