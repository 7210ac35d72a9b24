#pragma once

// Shared fixtures and oracles for the unit suites: random nodal fields,
// P1 point evaluation, and central-difference directional derivatives.

#include <functional>
#include <random>

#include "tscm/optimizer.hpp"

namespace tscm::testing {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// Uniform random field in [lo, hi].
inline RealField random_field(const Mesh& mesh, std::uint64_t seed, double lo,
                              double hi) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  RealField f = RealField::zeros(mesh);
  for (int v = 0; v < f.size(); ++v) f[v] = u(eng);
  return f;
}

// Random direction vanishing on the boundary.
inline RealField random_interior_field(const Mesh& mesh, std::uint64_t seed,
                                       double lo, double hi) {
  RealField f = random_field(mesh, seed, lo, hi);
  for (int v = 0; v < f.size(); ++v) {
    if (mesh.is_boundary(v)) f[v] = 0.0;
  }
  return f;
}

// P1 evaluation of a nodal field at an arbitrary point (brute-force
// triangle location; test meshes are small).
inline double eval_p1(const RealField& f, const Vec2& x) {
  const Mesh& mesh = *f.mesh;
  double best_min_bc = -1e30;
  double best_val = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2& a = mesh.nodes[tri[0]];
    const Vec2& b = mesh.nodes[tri[1]];
    const Vec2& c = mesh.nodes[tri[2]];
    const double det = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    const double l1 =
        ((x - a).x() * (c - a).y() - (x - a).y() * (c - a).x()) / det;
    const double l2 =
        ((b - a).x() * (x - a).y() - (b - a).y() * (x - a).x()) / det;
    const double l0 = 1.0 - l1 - l2;
    const double min_bc = std::min({l0, l1, l2});
    if (min_bc > best_min_bc) {
      best_min_bc = min_bc;
      best_val = l0 * f[tri[0]] + l1 * f[tri[1]] + l2 * f[tri[2]];
    }
    if (min_bc >= 0.0) break;
  }
  return best_val;
}

// Central difference (F(t) - F(-t)) / (2t) of a scalar path.
inline double central_diff(const std::function<double(double)>& F, double t) {
  return (F(t) - F(-t)) / (2.0 * t);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace tscm::testing
