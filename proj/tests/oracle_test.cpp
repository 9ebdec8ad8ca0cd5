#include <gtest/gtest.h>

#include "test_support.hpp"

namespace ipod {
namespace {

using testing::Rng;

SvdState truncated_state(const ExactSvd& ex, Index r) {
  SvdState s;
  s.modes = ex.modes.leftCols(r);
  s.sigma = ex.sigma.head(r);
  s.right = ex.right.leftCols(r);
  s.columns = static_cast<std::uint64_t>(ex.right.rows());
  return s;
}

TEST(ExactSvd, Examples) {
  const ExactSvd a = exact_weighted_svd(Matrix::Identity(2, 2), WeightMatrix::identity(2));
  ASSERT_EQ(a.sigma.size(), 2);
  EXPECT_NEAR(a.sigma(0), 1.0, 1e-15);
  EXPECT_NEAR(a.sigma(1), 1.0, 1e-15);

  Matrix u = Matrix::Zero(2, 2);
  u(0, 0) = 3;
  const ExactSvd b = exact_weighted_svd(u, WeightMatrix::identity(2));
  ASSERT_EQ(b.sigma.size(), 1);
  EXPECT_NEAR(b.sigma(0), 3.0, 1e-15);
}

TEST(ExactSvd, RandomResiduals) {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 15 + 5 * trial, n = 5 + 2 * trial;
    const WeightMatrix w = testing::random_spd(rng, m);
    const Matrix u = testing::random_matrix(rng, m, n);
    const ExactSvd ex = exact_weighted_svd(u, w);
    EXPECT_LE(orthonormality_error(ex.modes, w), 1e-12);
    EXPECT_LE(orthonormality_error(ex.right), 1e-12);
    const Matrix back = ex.modes * ex.sigma.asDiagonal() * ex.right.transpose();
    EXPECT_LE((u - back).cwiseAbs().maxCoeff(), 1e-12 * ex.sigma(0));
  }
}

TEST(ExactSvd, IdentityWeightMatchesStandardSvd) {
  Rng rng(42);
  const Matrix u = testing::random_matrix(rng, 20, 8);
  Eigen::JacobiSVD<Matrix> svd(u);
  const ExactSvd ex = exact_weighted_svd(u, WeightMatrix::identity(20));
  for (Index i = 0; i < 8; ++i) {
    EXPECT_NEAR(ex.sigma(i), svd.singularValues()(i), 1e-12 * svd.singularValues()(i));
  }
}

TEST(ExactSvd, RejectsBadShapes) {
  EXPECT_THROW(exact_weighted_svd(Matrix::Zero(3, 0), WeightMatrix::identity(3)), InvalidInput);
  EXPECT_THROW(exact_weighted_svd(Matrix::Zero(2, 2), WeightMatrix::identity(3)), SizeError);
}

TEST(ExactError, ZeroForExactState) {
  Rng rng(43);
  const WeightMatrix w = testing::random_spd(rng, 12);
  const Matrix u = testing::random_matrix(rng, 12, 5);
  const ExactSvd ex = exact_weighted_svd(u, w);
  EXPECT_LE(exact_error(u, truncated_state(ex, ex.sigma.size()), w), 1e-12 * ex.sigma(0));
}

TEST(ExactError, RankTruncationLeavesNextSingularValue) {
  Rng rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    const WeightMatrix w = testing::random_spd(rng, 18);
    const Matrix u = testing::random_matrix(rng, 18, 9);
    const ExactSvd ex = exact_weighted_svd(u, w);
    for (Index r = 1; r < ex.sigma.size(); ++r) {
      const double err = exact_error(u, truncated_state(ex, r), w);
      EXPECT_NEAR(err, ex.sigma(r), 1e-11 * ex.sigma(r));
    }
  }
}

TEST(ExactError, ResidualTruncationErrorIsP) {
  Rng rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    const WeightMatrix w = testing::random_spd(rng, 16);
    const Matrix u = testing::random_matrix(rng, 16, 6);
    const ExactSvd ex = exact_weighted_svd(u, w);
    const Vector c = testing::random_vector(rng, 16);
    const Vector proj = ex.modes * (ex.modes.transpose() * (w.entries() * c));
    const double p = m_norm(Vector(c - proj), w);

    // Force the p-truncation branch on top of the exact SVD of U.
    SvdState s = truncated_state(ex, ex.sigma.size());
    const UpdateReport r = update(s, c, w, {10.0 * p, 1e-300});
    EXPECT_NEAR(r.p, p, 1e-11 * p);
    Matrix projected(16, 7), full(16, 7);
    projected << u, proj;
    full << u, c;
    EXPECT_LE((reconstruct(s) - projected).cwiseAbs().maxCoeff(), 1e-12 * ex.sigma(0));
    EXPECT_NEAR(exact_error(full, s, w), p, 1e-11 * p);
  }
}

TEST(ExactError, RejectsMismatch) {
  const SvdState s = initialize(Vector::Ones(3), WeightMatrix::identity(3));
  EXPECT_THROW(exact_error(Matrix::Ones(3, 2), s, WeightMatrix::identity(3)), SizeError);
  EXPECT_THROW(exact_error(Matrix::Ones(2, 1), s, WeightMatrix::identity(3)), SizeError);
}

TEST(Sweep, EmptyStream) {
  EXPECT_THROW(tolerance_sweep(Matrix(4, 0), WeightMatrix::identity(4), standard_tolerance_grid()),
               InvalidInput);
}

TEST(Sweep, StandardGridOrder) {
  const auto grid = standard_tolerance_grid();
  ASSERT_EQ(grid.size(), 9u);
  EXPECT_EQ(grid[0].tol, 1e-8);
  EXPECT_EQ(grid[0].tol_sv, 1e-8);
  EXPECT_EQ(grid[1].tol, 1e-8);
  EXPECT_EQ(grid[1].tol_sv, 1e-10);
  EXPECT_EQ(grid[8].tol, 1e-12);
  EXPECT_EQ(grid[8].tol_sv, 1e-12);
}

TEST(Sweep, NoTruncationGrid) {
  Rng rng(46);
  const WeightMatrix w = testing::random_spd(rng, 30);
  const Matrix u = testing::random_matrix(rng, 30, 20);
  const auto rows = tolerance_sweep(u, w, {{1e-300, 1e-300}});
  ASSERT_EQ(rows.size(), 1u);
  const ExactSvd ex = exact_weighted_svd(u, w);
  EXPECT_EQ(rows[0].incr_error_bound, 0.0);
  EXPECT_LE(rows[0].exact_error, 1e-10 * ex.sigma(0));
  EXPECT_EQ(rows[0].rank, 20);
}

TEST(Sweep, DominatedOnDecayingData) {
  Rng rng(47);
  const WeightMatrix w = testing::random_spd(rng, 50);
  Vector s(40);
  for (Index i = 0; i < 40; ++i) s(i) = std::pow(0.6, static_cast<double>(i));
  const Matrix u = testing::with_weighted_singular_values(rng, w, 70, s);
  for (const SweepRow& row : tolerance_sweep(u, w, standard_tolerance_grid())) {
    EXPECT_LE(row.exact_error, row.incr_error_bound + 1e-10 * s(0)) << row.tols.tol << ' ' << row.tols.tol_sv;
  }
}

// Leading singular vectors agree with the oracle when nothing is truncated.
TEST(Agreement, SubspaceAnglesWithoutTruncation) {
  Rng rng(48);
  const WeightMatrix w = testing::random_spd(rng, 40);
  Vector s(10);
  for (Index i = 0; i < 10; ++i) s(i) = 10.0 / static_cast<double>(i + 1);
  const Matrix u = testing::with_weighted_singular_values(rng, w, 25, s);
  const SvdState st = run_stream(u, w, {1e-300, 1e-300});
  const ExactSvd ex = exact_weighted_svd(u, w);
  EXPECT_LE((st.sigma.head(10) - ex.sigma).cwiseAbs().maxCoeff(), 1e-11 * ex.sigma(0));
  for (Index j = 0; j < 10; ++j) {
    Vector v = st.modes.col(j);
    if (m_inner(v, ex.modes.col(j), w) < 0.0) v = -v;
    EXPECT_LT(m_norm(Vector(v - ex.modes.col(j)), w), 1e-8) << j;
  }
}

}  // namespace
}  // namespace ipod
