/**
 * @file
 * @brief FitzHugh-Nagumo snapshot generator: P1 finite elements in space, a
 *        linearly implicit Rosenbrock 2(3) integrator in time.
 *
 * PDE on 0 < x < 1 with zero initial data:
 *
 *   v_t = mu v_xx - w / mu + f(v) / mu + c / mu,   f(v) = v (v - 0.1) (1 - v)
 *   w_t = b v - gamma w + c
 *   v_x(t, 0) = -A t^3 exp(-r t),  v_x(t, 1) = 0.
 *
 * The semidiscrete system in the nodal coefficients is
 *
 *   Mass v' = -mu K v - Mass w / mu + Mass f(v) / mu + (c / mu) Mass 1 + g(t) e_0
 *   Mass w' = b Mass v - gamma Mass w + c Mass 1,
 *
 * with f applied nodewise (interpolated coefficients) and g(t) = mu A t^3 exp(-r t)
 * the Neumann contribution -mu v_x(t, 0) phi_0(0).
 */
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <lapacke.h>

#include "ipod/weighted_linalg.hpp"

namespace ipod {

struct FhnParams {
  double mu = 0.015;
  double b = 0.5;
  double gamma = 2.0;
  double c_const = 0.05;
  double flux_amplitude = 50000.0;
  double flux_decay = 15.0;

  void validate() const {
    if (!(mu > 0.0)) throw InvalidInput("FhnParams: mu must be positive");
  }
};

/// Equally spaced nodes on [0, 1].
class Mesh1D {
 public:
  explicit Mesh1D(Index nodes) : nodes_(nodes) {
    if (nodes < 2) throw InvalidInput("Mesh1D: need at least 2 nodes, got " + std::to_string(nodes));
  }
  Index nodes() const noexcept { return nodes_; }
  double spacing() const noexcept { return 1.0 / static_cast<double>(nodes_ - 1); }

 private:
  Index nodes_;
};

struct FemMatrices {
  SparseMatrix mass;
  SparseMatrix stiffness;
};

namespace detail {

/// Symmetric tridiagonal matrix: diag[i], off[i] couples i and i + 1.
struct Tridiagonal {
  std::vector<double> diag;
  std::vector<double> off;

  void multiply(const double* x, double* y) const {
    const std::size_t n = diag.size();
    for (std::size_t i = 0; i < n; ++i) {
      double s = diag[i] * x[i];
      if (i > 0) s += off[i - 1] * x[i - 1];
      if (i + 1 < n) s += off[i] * x[i + 1];
      y[i] = s;
    }
  }

  SparseMatrix to_sparse() const {
    const auto n = static_cast<Index>(diag.size());
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < n; ++i) {
      t.emplace_back(i, i, diag[static_cast<std::size_t>(i)]);
      if (i + 1 < n) {
        t.emplace_back(i, i + 1, off[static_cast<std::size_t>(i)]);
        t.emplace_back(i + 1, i, off[static_cast<std::size_t>(i)]);
      }
    }
    SparseMatrix s(n, n);
    s.setFromTriplets(t.begin(), t.end());
    return s;
  }
};

inline std::pair<Tridiagonal, Tridiagonal> p1_tridiagonals(const Mesh1D& mesh) {
  const auto n = static_cast<std::size_t>(mesh.nodes());
  const double h = mesh.spacing();
  Tridiagonal mass{std::vector<double>(n, 0.0), std::vector<double>(n - 1, h / 6.0)};
  Tridiagonal stiff{std::vector<double>(n, 0.0), std::vector<double>(n - 1, -1.0 / h)};
  for (std::size_t e = 0; e + 1 < n; ++e) {
    mass.diag[e] += h / 3.0;
    mass.diag[e + 1] += h / 3.0;
    stiff.diag[e] += 1.0 / h;
    stiff.diag[e + 1] += 1.0 / h;
  }
  return {std::move(mass), std::move(stiff)};
}

}  // namespace detail

/// P1 mass and Neumann stiffness matrices on @p mesh.
inline FemMatrices assemble_fem(const Mesh1D& mesh) {
  auto [mass, stiff] = detail::p1_tridiagonals(mesh);
  return {mass.to_sparse(), stiff.to_sparse()};
}

/// L2(0,1) x L2(0,1) weight matrix: blockdiag(mass, mass) for [v; w] coefficient vectors.
inline WeightMatrix build_weight_matrix(const Mesh1D& mesh) {
  const SparseMatrix mass = assemble_fem(mesh).mass;
  const Index n = mass.rows();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(2 * mass.nonZeros()));
  for (Index col = 0; col < mass.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(mass, col); it; ++it) {
      t.emplace_back(it.row(), it.col(), it.value());
      t.emplace_back(it.row() + n, it.col() + n, it.value());
    }
  }
  SparseMatrix m(2 * n, 2 * n);
  m.setFromTriplets(t.begin(), t.end());
  return WeightMatrix(std::move(m));
}

struct StepperConfig {
  double rel_tol = 1e-3;
  double abs_tol = 1e-6;
  double initial_step = 0.0;  ///< 0 selects a step from the initial slope
  double max_step = 0.0;      ///< 0 means t_final / 10
  std::size_t max_steps = 10'000'000;
};

/// Snapshot columns are sqrt(dt_k) * [v(t_k); w(t_k)].
struct SnapshotSet {
  std::vector<double> times;
  std::vector<double> weights;
  Matrix columns;
};

/// Called once per accepted step with (t_k, dt_k, raw [v; w] at t_k).
using SnapshotCallback = std::function<void(double, double, const Vector&)>;

/**
 * @brief Semidiscrete FitzHugh-Nagumo right-hand side and its banded Jacobian.
 *
 * Unknowns are interleaved internally (v_0, w_0, v_1, w_1, ...) so that all
 * matrices of the system have lower and upper bandwidth 3.
 */
class FhnSystem {
 public:
  static constexpr int kLower = 3;
  static constexpr int kUpper = 3;

  FhnSystem(const FhnParams& params, const Mesh1D& mesh) : params_(params), mesh_(mesh) {
    params_.validate();
    auto [mass, stiff] = detail::p1_tridiagonals(mesh);
    mass_ = std::move(mass);
    stiff_ = std::move(stiff);
    const std::size_t n = nodes();
    std::vector<double> ones(n, 1.0);
    mass_one_.resize(n);
    mass_.multiply(ones.data(), mass_one_.data());
    v_.resize(n);
    w_.resize(n);
    fv_.resize(n);
    tmp_.resize(n);
  }

  std::size_t nodes() const noexcept { return static_cast<std::size_t>(mesh_.nodes()); }
  std::size_t size() const noexcept { return 2 * nodes(); }
  const FhnParams& params() const noexcept { return params_; }

  double boundary_flux(double t) const {
    return params_.mu * params_.flux_amplitude * t * t * t * std::exp(-params_.flux_decay * t);
  }

  double boundary_flux_rate(double t) const {
    const double r = params_.flux_decay;
    return params_.mu * params_.flux_amplitude * (3.0 * t * t - r * t * t * t) * std::exp(-r * t);
  }

  static double reaction(double v) { return v * (v - 0.1) * (1.0 - v); }
  static double reaction_slope(double v) { return -3.0 * v * v + 2.2 * v - 0.1; }

  /// out = F(t, y) for interleaved y.
  void rhs(double t, const Vector& y, Vector& out) {
    const std::size_t n = nodes();
    const double mu = params_.mu;
    split(y);
    for (std::size_t i = 0; i < n; ++i) fv_[i] = reaction(v_[i]);

    std::vector<double>& kv = tmp_;
    stiff_.multiply(v_.data(), kv.data());
    std::vector<double> mw(n), mf(n), mv(n);
    mass_.multiply(w_.data(), mw.data());
    mass_.multiply(fv_.data(), mf.data());
    mass_.multiply(v_.data(), mv.data());
    out.resize(static_cast<Index>(size()));
    for (std::size_t i = 0; i < n; ++i) {
      out(static_cast<Index>(2 * i)) =
          -mu * kv[i] - mw[i] / mu + mf[i] / mu + (params_.c_const / mu) * mass_one_[i];
      out(static_cast<Index>(2 * i + 1)) =
          params_.b * mv[i] - params_.gamma * mw[i] + params_.c_const * mass_one_[i];
    }
    out(0) += boundary_flux(t);
  }

  /// out = B x where B = blockdiag(Mass, Mass) in interleaved ordering.
  void mass_apply(const Vector& x, Vector& out) {
    split(x);
    const std::size_t n = nodes();
    std::vector<double> mv(n), mw(n);
    mass_.multiply(v_.data(), mv.data());
    mass_.multiply(w_.data(), mw.data());
    out.resize(static_cast<Index>(size()));
    for (std::size_t i = 0; i < n; ++i) {
      out(static_cast<Index>(2 * i)) = mv[i];
      out(static_cast<Index>(2 * i + 1)) = mw[i];
    }
  }

  /**
   * @brief Fills LAPACK band storage (column major, ldab = 2 kl + ku + 1) with B - hd J(y).
   */
  void iteration_matrix(const Vector& y, double hd, std::vector<double>& band) const {
    const std::size_t n = nodes();
    const std::size_t dim = size();
    const int ldab = 2 * kLower + kUpper + 1;
    band.assign(static_cast<std::size_t>(ldab) * dim, 0.0);
    auto put = [&](std::size_t row, std::size_t col, double value) {
      const std::size_t r = static_cast<std::size_t>(kLower + kUpper) + row - col;
      band[r + col * static_cast<std::size_t>(ldab)] += value;
    };
    const double mu = params_.mu;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = (i == 0 ? 0 : i - 1); j <= std::min(n - 1, i + 1); ++j) {
        const double mij = i == j ? mass_.diag[i] : mass_.off[std::min(i, j)];
        const double kij = i == j ? stiff_.diag[i] : stiff_.off[std::min(i, j)];
        const double fprime = reaction_slope(y(static_cast<Index>(2 * j)));
        put(2 * i, 2 * j, mij + hd * mu * kij - (hd / mu) * mij * fprime);
        put(2 * i, 2 * j + 1, (hd / mu) * mij);
        put(2 * i + 1, 2 * j, -hd * params_.b * mij);
        put(2 * i + 1, 2 * j + 1, (1.0 + hd * params_.gamma) * mij);
      }
    }
  }

  /// Interleaved (v0, w0, v1, ...) to stacked [v; w].
  Vector stacked(const Vector& y) const {
    const std::size_t n = nodes();
    Vector out(static_cast<Index>(2 * n));
    for (std::size_t i = 0; i < n; ++i) {
      out(static_cast<Index>(i)) = y(static_cast<Index>(2 * i));
      out(static_cast<Index>(n + i)) = y(static_cast<Index>(2 * i + 1));
    }
    return out;
  }

 private:
  void split(const Vector& y) {
    for (std::size_t i = 0; i < nodes(); ++i) {
      v_[i] = y(static_cast<Index>(2 * i));
      w_[i] = y(static_cast<Index>(2 * i + 1));
    }
  }

  FhnParams params_;
  Mesh1D mesh_;
  detail::Tridiagonal mass_;
  detail::Tridiagonal stiff_;
  std::vector<double> mass_one_;
  std::vector<double> v_, w_, fv_, tmp_;
};

namespace detail {

class BandLu {
 public:
  explicit BandLu(std::size_t n) : n_(n), pivots_(n) {}

  bool factor(std::vector<double> band) {
    band_ = std::move(band);
    const lapack_int info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, static_cast<lapack_int>(n_),
                                           static_cast<lapack_int>(n_), FhnSystem::kLower,
                                           FhnSystem::kUpper, band_.data(), kLd, pivots_.data());
    return info == 0;
  }

  void solve(Vector& rhs) const {
    LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(n_), FhnSystem::kLower,
                   FhnSystem::kUpper, 1, band_.data(), kLd, pivots_.data(), rhs.data(),
                   static_cast<lapack_int>(n_));
  }

 private:
  static constexpr lapack_int kLd = 2 * FhnSystem::kLower + FhnSystem::kUpper + 1;
  std::size_t n_;
  std::vector<double> band_;
  std::vector<lapack_int> pivots_;
};

}  // namespace detail

/**
 * @brief Integrates from t = 0 (zero initial data) to @p t_final, reporting every accepted step.
 *
 * Rosenbrock 2(3) pair with a constant mass matrix: one banded LU and three
 * solves per attempted step, third-order error estimate, L-stable second-order
 * solution.
 *
 * @throws IntegrationFailure on step size underflow, singular iteration matrix,
 *         or when the step budget is exhausted.
 */
inline void simulate_streaming(const FhnParams& params, const Mesh1D& mesh, double t_final,
                               const StepperConfig& cfg, const SnapshotCallback& on_step) {
  if (!(t_final > 0.0)) throw InvalidInput("simulate: t_final must be positive");
  FhnSystem sys(params, mesh);
  const std::size_t dim = sys.size();
  const auto ndim = static_cast<Index>(dim);
  const double d = 1.0 / (2.0 + std::sqrt(2.0));
  const double e32 = 6.0 + std::sqrt(2.0);
  const double max_step = cfg.max_step > 0.0 ? cfg.max_step : 0.1 * t_final;
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  Vector y = Vector::Zero(ndim);
  Vector f0, f1, f2, tvec, bk, k1, k2, k3, ynew, stage;
  std::vector<double> band;
  detail::BandLu lu(dim);
  double t = 0.0;

  auto weight_of = [&](double a, double b) {
    return cfg.abs_tol + cfg.rel_tol * std::max(std::abs(a), std::abs(b));
  };

  double h = cfg.initial_step;
  if (!(h > 0.0)) {
    // Step from the initial slope B^{-1} F(0, 0).
    sys.rhs(0.0, y, f0);
    sys.iteration_matrix(y, 0.0, band);
    if (!lu.factor(band)) throw IntegrationFailure("singular mass matrix", 0.0);
    Vector slope = f0;
    lu.solve(slope);
    double rate = 0.0;
    for (Index i = 0; i < ndim; ++i) rate = std::max(rate, std::abs(slope(i)) / weight_of(0.0, 0.0));
    h = std::min(max_step, t_final);
    const double rh = rate / 0.8;
    if (h * rh > 1.0) h = 1.0 / rh;
    h = std::max(h, 16.0 * kEps);
  }

  std::size_t steps = 0;
  while (t < t_final) {
    if (steps++ >= cfg.max_steps) throw IntegrationFailure("step budget exhausted", t);
    h = std::min(h, max_step);
    const bool last = t + h >= t_final * (1.0 - 4.0 * kEps);
    if (last) h = t_final - t;
    if (h < 16.0 * kEps * std::max(1.0, std::abs(t))) {
      throw IntegrationFailure("step size underflow", t);
    }

    sys.rhs(t, y, f0);
    tvec = Vector::Zero(ndim);
    tvec(0) = h * d * sys.boundary_flux_rate(t);

    sys.iteration_matrix(y, h * d, band);
    if (!lu.factor(band)) {
      h *= 0.5;
      continue;
    }
    k1 = f0 + tvec;
    lu.solve(k1);

    stage = y + 0.5 * h * k1;
    sys.rhs(t + 0.5 * h, stage, f1);
    sys.mass_apply(k1, bk);
    k2 = f1 - bk;
    lu.solve(k2);
    k2 += k1;

    ynew = y + h * k2;
    const double tnew = last ? t_final : t + h;
    sys.rhs(tnew, ynew, f2);
    Vector bk2;
    sys.mass_apply(k2, bk2);
    k3 = f2 - e32 * (bk2 - f1) - 2.0 * (bk - f0) + tvec;
    lu.solve(k3);

    double err = 0.0;
    for (Index i = 0; i < ndim; ++i) {
      const double est = (h / 6.0) * std::abs(k1(i) - 2.0 * k2(i) + k3(i));
      err = std::max(err, est / weight_of(y(i), ynew(i)));
    }
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();

    const double factor = err > 0.0 ? 0.8 * std::cbrt(1.0 / err) : 5.0;
    if (err <= 1.0) {
      const double dt = tnew - t;
      t = tnew;
      y = ynew;
      on_step(t, dt, sys.stacked(y));
      h *= std::clamp(factor, 0.2, 5.0);
    } else {
      h *= std::max(0.1, factor);
    }
  }
}

/// Collects the scaled snapshot matrix; the zero initial state is not included.
inline SnapshotSet simulate(const FhnParams& params, const Mesh1D& mesh, double t_final,
                            const StepperConfig& cfg = {}) {
  SnapshotSet out;
  std::vector<Vector> cols;
  simulate_streaming(params, mesh, t_final, cfg, [&](double t, double dt, const Vector& raw) {
    const double weight = std::sqrt(dt);
    out.times.push_back(t);
    out.weights.push_back(weight);
    cols.push_back(weight * raw);
  });
  out.columns.resize(2 * mesh.nodes(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.columns.col(static_cast<Index>(k)) = cols[k];
  return out;
}

}  // namespace ipod
