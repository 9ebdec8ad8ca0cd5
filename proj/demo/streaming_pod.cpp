// Streams a small FitzHugh-Nagumo run through the incremental SVD and
// compares the result with a batch weighted SVD of the same snapshots.
#include <cstdio>

#include "ipod/ipod.hpp"

int main() {
  using namespace ipod;

  const Mesh1D mesh(100);
  const WeightMatrix m = build_weight_matrix(mesh);
  IncrementalPod pod(m, {1e-10, 1e-10});

  Matrix stored(2 * mesh.nodes(), 0);
  simulate_streaming({}, mesh, 5.0, {}, [&](double, double dt, const Vector& raw) {
    const Vector c = std::sqrt(dt) * raw;
    pod.push(c);
    stored.conservativeResize(Eigen::NoChange, stored.cols() + 1);
    stored.rightCols(1) = c;
  });

  const SvdState& s = pod.state();
  const ExactSvd ex = exact_weighted_svd(stored, m);
  std::printf("snapshots %llu, rank %ld, bound %.3e, exact error %.3e\n",
              static_cast<unsigned long long>(s.columns), static_cast<long>(s.rank()), s.error_bound,
              exact_error(stored, s, m));
  std::printf("%4s %14s %14s\n", "i", "incremental", "batch");
  for (Index i = 0; i < std::min<Index>(8, s.rank()); ++i) {
    std::printf("%4ld %14.6e %14.6e\n", static_cast<long>(i + 1), s.sigma(i), ex.sigma(i));
  }
}
