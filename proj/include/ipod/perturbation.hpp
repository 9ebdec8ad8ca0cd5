/**
 * @file
 * @brief Perturbation bounds for singular values and singular vectors.
 *
 * Given ||H - H~|| <= eps in the operator norm, every singular value moves by
 * at most eps, and, while the gaps stay large enough, the leading singular
 * vectors move by at most E_j^{1/2} (left, M-norm) and
 * E_j^{1/2} + 2 eps_j / sigma_j (right, Euclidean norm), where
 *
 *   eps_j = j eps + 2 sum_{i<j} (eps_i + sigma_i E_i^{1/2}),
 *   E_j   = 2 (1 - sqrt(((sigma_j - 2 eps_j)^2 - sigma_{j+1}^2) / (sigma_j^2 - sigma_{j+1}^2))),
 *
 * valid while eps_j <= (sigma_j - sigma_{j+1}) / 2.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "ipod/oracle.hpp"
#include "ipod/weighted_linalg.hpp"

namespace ipod {

/// Returns true iff |a_l - b_l| <= eps for every l, padding the shorter sequence with zeros.
inline bool singular_value_gap_check(const Vector& exact, const Vector& approx, double eps) {
  const Index n = std::max(exact.size(), approx.size());
  for (Index l = 0; l < n; ++l) {
    const double a = l < exact.size() ? exact(l) : 0.0;
    const double b = l < approx.size() ? approx(l) : 0.0;
    if (!(std::abs(a - b) <= eps)) return false;
  }
  return true;
}

/// Largest |a_l - b_l| over the zero-padded sequences.
inline double max_singular_value_deviation(const Vector& exact, const Vector& approx) {
  const Index n = std::max(exact.size(), approx.size());
  double worst = 0.0;
  for (Index l = 0; l < n; ++l) {
    const double a = l < exact.size() ? exact(l) : 0.0;
    const double b = l < approx.size() ? approx(l) : 0.0;
    worst = std::max(worst, std::abs(a - b));
  }
  return worst;
}

/// Entries j = 1..k are stored at index j - 1. Empty optionals are invalid
/// because an earlier (or this) gap condition failed.
struct BoundSequence {
  double eps = 0.0;
  std::vector<std::optional<double>> eps_seq;
  std::vector<std::optional<double>> e_seq;
  std::vector<bool> gap_ok;
  Vector sigmas;  ///< sigma_1 .. sigma_{k+1}
};

/**
 * @throws PreconditionViolation unless sigma_1 > ... > sigma_{k+1} > 0, k >= 1 and eps >= 0.
 */
inline BoundSequence bound_sequence(const Vector& sigmas, double eps, Index k) {
  if (k < 1) throw PreconditionViolation("bound_sequence: k must be at least 1");
  if (sigmas.size() < k + 1) {
    throw PreconditionViolation("bound_sequence: need k + 1 = " + std::to_string(k + 1) +
                                " singular values, got " + std::to_string(sigmas.size()));
  }
  if (!(eps >= 0.0) || !std::isfinite(eps)) {
    throw PreconditionViolation("bound_sequence: eps must be finite and nonnegative");
  }
  for (Index j = 0; j <= k; ++j) {
    if (!(sigmas(j) > 0.0)) throw PreconditionViolation("bound_sequence: singular values must be positive");
    if (j > 0 && !(sigmas(j - 1) > sigmas(j))) {
      throw PreconditionViolation("bound_sequence: singular values must be distinct and descending");
    }
  }

  BoundSequence out;
  out.eps = eps;
  out.sigmas = sigmas.head(k + 1);
  out.eps_seq.assign(static_cast<std::size_t>(k), std::nullopt);
  out.e_seq.assign(static_cast<std::size_t>(k), std::nullopt);
  out.gap_ok.assign(static_cast<std::size_t>(k), false);

  double tail = 0.0;  // sum_{i<j} (eps_i + sigma_i E_i^{1/2})
  for (Index j = 1; j <= k; ++j) {
    const auto idx = static_cast<std::size_t>(j - 1);
    const double eps_j = static_cast<double>(j) * eps + 2.0 * tail;
    out.eps_seq[idx] = eps_j;
    const double s = sigmas(j - 1), s_next = sigmas(j);
    if (!(eps_j <= (s - s_next) / 2.0)) break;  // the remaining entries stay invalid
    out.gap_ok[idx] = true;
    const double arg = ((s - 2.0 * eps_j) * (s - 2.0 * eps_j) - s_next * s_next) /
                       ((s - s_next) * (s + s_next));
    const double e_j = 2.0 * (1.0 - std::sqrt(std::clamp(arg, 0.0, 1.0)));
    out.e_seq[idx] = e_j;
    tail += eps_j + s * std::sqrt(e_j);
  }
  return out;
}

/**
 * @brief Flips the approximate pair (v~, w~) by one common sign so that (v~, v)_M >= 0.
 * @throws AmbiguousAlignment when (v~, v)_M is exactly zero.
 */
inline std::pair<Vector, Vector> align_singular_pair(const Vector& v_exact, const Vector& w_exact,
                                                     const Vector& v_approx, const Vector& w_approx,
                                                     const WeightMatrix& m) {
  detail::require_same_size(w_approx.size(), w_exact.size(), "align_singular_pair(w)");
  const double r = m_inner(v_approx, v_exact, m);
  if (r == 0.0) throw AmbiguousAlignment("approximate left vector is M-orthogonal to the exact one");
  const double sign = r > 0.0 ? 1.0 : -1.0;
  return {sign * v_approx, sign * w_approx};
}

struct VectorBoundRow {
  Index j = 0;  ///< one-based
  double sigma = 0.0;
  std::optional<double> eps_j;
  std::optional<double> e_j;
  bool gap_ok = false;
  double v_err = 0.0;
  double v_bound = 0.0;
  double w_err = 0.0;
  double w_bound = 0.0;
  bool v_holds = false;  ///< meaningful only when gap_ok
  bool w_holds = false;
};

inline constexpr double kBoundCheckSlack = 1e-10;

/**
 * @brief Checks the singular vector bounds for j = 1..k.
 *
 * Rows whose gap condition fails are reported with gap_ok = false and carry no verdict.
 * @throws PreconditionViolation if the exact values are not distinct/positive or
 *         either decomposition has too few triples.
 */
inline std::vector<VectorBoundRow> vector_bound_check(const ExactSvd& exact, const ExactSvd& approx,
                                                      const WeightMatrix& m, double eps, Index k) {
  const BoundSequence seq = bound_sequence(exact.sigma, eps, k);
  if (approx.sigma.size() < k) {
    throw PreconditionViolation("vector_bound_check: approximation has rank " +
                                std::to_string(approx.sigma.size()) + " < k = " + std::to_string(k));
  }
  detail::require_same_size(approx.right.rows(), exact.right.rows(), "vector_bound_check(W rows)");
  detail::require_same_size(approx.modes.rows(), exact.modes.rows(), "vector_bound_check(V rows)");

  std::vector<VectorBoundRow> rows;
  rows.reserve(static_cast<std::size_t>(k));
  for (Index j = 1; j <= k; ++j) {
    const auto idx = static_cast<std::size_t>(j - 1);
    VectorBoundRow row;
    row.j = j;
    row.sigma = exact.sigma(j - 1);
    row.eps_j = seq.eps_seq[idx];
    row.e_j = seq.e_seq[idx];
    row.gap_ok = seq.gap_ok[idx];
    auto [v, w] = align_singular_pair(exact.modes.col(j - 1), exact.right.col(j - 1),
                                      approx.modes.col(j - 1), approx.right.col(j - 1), m);
    row.v_err = m_norm(Vector(exact.modes.col(j - 1) - v), m);
    row.w_err = (exact.right.col(j - 1) - w).norm();
    if (row.gap_ok) {
      const double root = std::sqrt(*row.e_j);
      row.v_bound = root;
      row.w_bound = root + 2.0 * (*row.eps_j) / row.sigma;
      row.v_holds = row.v_err <= row.v_bound + kBoundCheckSlack;
      row.w_holds = row.w_err <= row.w_bound + kBoundCheckSlack;
    }
    rows.push_back(row);
  }
  return rows;
}

/// Views a streaming state as an ExactSvd-shaped triple.
inline ExactSvd as_triple(const SvdState& state) {
  return {state.modes, state.sigma, state.right};
}

}  // namespace ipod
