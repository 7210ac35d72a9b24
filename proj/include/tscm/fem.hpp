#pragma once

// P1 finite elements on triangles: complex-symmetric systems for the
// eddy-current forward/adjoint problems, real mass/stiffness matrices
// shared by the regularizer projections, and boundary-trace quadrature.
//
// All element integrals are exact for the polynomial degrees that occur
// (stiffness of P1, mass with P1 coefficient, trace products of P1 on
// edges), so quadrature never enters gradient-consistency budgets.

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SparseCholesky>

#include "tscm/field.hpp"
#include "tscm/mesh.hpp"

namespace tscm {

using SparseReal = Eigen::SparseMatrix<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + format(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  static std::string format(double r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", r);
    return buf;
  }
  double residual_ = 0.0;
};

namespace detail {

// P1 gradients: grad[i] = (y_j - y_k, x_k - x_j) / (2A), (i,j,k) cyclic.
inline std::array<Vec2, 3> p1_gradients(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const double inv2a = 1.0 / (2.0 * mesh.triangle_area()[t]);
  std::array<Vec2, 3> g;
  for (int i = 0; i < 3; ++i) {
    const Vec2& pj = mesh.nodes[tri[(i + 1) % 3]];
    const Vec2& pk = mesh.nodes[tri[(i + 2) % 3]];
    g[i] = Vec2(pj.y() - pk.y(), pk.x() - pj.x()) * inv2a;
  }
  return g;
}

// Exact integral of phi_i * phi_j * phi_k over a triangle of area A.
inline double triple_product_coeff(int i, int j, int k, double A) {
  if (i == j && j == k) return A / 10.0;
  if (i == j || j == k || i == k) return A / 30.0;
  return A / 60.0;
}

}  // namespace detail

inline SparseReal assemble_mass(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double A = mesh.triangle_area()[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trip.emplace_back(tri[i], tri[j], (i == j) ? A / 6.0 : A / 12.0);
      }
    }
  }
  SparseReal M(mesh.n_nodes(), mesh.n_nodes());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

// Stiffness with an optional per-triangle scalar weight.
inline SparseReal assemble_stiffness(const Mesh& mesh,
                                     const std::vector<double>* weight = nullptr) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double A = mesh.triangle_area()[t];
    const double w = weight ? (*weight)[t] : 1.0;
    const auto g = detail::p1_gradients(mesh, t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trip.emplace_back(tri[i], tri[j], w * A * g[i].dot(g[j]));
      }
    }
  }
  SparseReal K(mesh.n_nodes(), mesh.n_nodes());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

struct SparseSystem {
  const Mesh* mesh = nullptr;
  SparseComplex matrix;
  Eigen::VectorXcd rhs;
};

// Assembles mu_inv * K + i * omega * M(sigma) with sigma interpolated as
// P1 and the resulting cubic mass integrand integrated exactly. The RHS
// starts at zero. Rejects non-positive conductivities, which would break
// the coercivity that makes the system invertible.
inline SparseSystem assemble_system(const Mesh& mesh, double mu_inv,
                                    double omega, const RealField& sigma) {
  sigma.check_size();
  if (!(omega > 0.0)) throw std::invalid_argument("assemble: omega <= 0");
  if (!(mu_inv > 0.0)) throw std::invalid_argument("assemble: mu_inv <= 0");
  for (int v = 0; v < sigma.size(); ++v) {
    if (!(sigma[v] > 0.0)) {
      throw std::invalid_argument("assemble: non-positive sigma at node " +
                                  std::to_string(v));
    }
  }
  const Complex iw(0.0, omega);
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(9 * mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double A = mesh.triangle_area()[t];
    const auto g = detail::p1_gradients(mesh, t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double mass = 0.0;
        for (int k = 0; k < 3; ++k) {
          mass += sigma[tri[k]] * detail::triple_product_coeff(i, j, k, A);
        }
        trip.emplace_back(tri[i], tri[j],
                          Complex(mu_inv * A * g[i].dot(g[j]), 0.0) + iw * mass);
      }
    }
  }
  SparseSystem sys;
  sys.mesh = &mesh;
  sys.matrix.resize(mesh.n_nodes(), mesh.n_nodes());
  sys.matrix.setFromTriplets(trip.begin(), trip.end());
  sys.rhs = Eigen::VectorXcd::Zero(mesh.n_nodes());
  return sys;
}

// Adds the boundary functional of a piecewise-constant surface current:
// amplitude on the labeled arc, zero elsewhere. Exact for P1 traces.
inline SparseSystem& apply_neumann_rhs(SparseSystem& sys, int arc_label,
                                       double amplitude) {
  const Mesh& mesh = *sys.mesh;
  if (arc_label < 0 || arc_label >= mesh.n_arcs) {
    throw std::invalid_argument("neumann rhs: unknown arc label " +
                                std::to_string(arc_label));
  }
  const auto& loop = mesh.boundary_loop();
  const auto& len = mesh.boundary_edge_length();
  const auto& arc = mesh.boundary_edge_arc();
  const int B = mesh.n_boundary();
  for (int k = 0; k < B; ++k) {
    if (arc[k] != arc_label) continue;
    const double half = 0.5 * amplitude * len[k];
    sys.rhs[loop[k]] += half;
    sys.rhs[loop[(k + 1) % B]] += half;
  }
  return sys;
}

// Sparse direct factorization of a complex-symmetric system, reusable
// across the right-hand sides of all excitation coils.
class FactorizedSystem {
 public:
  explicit FactorizedSystem(const SparseSystem& sys)
      : mesh_(sys.mesh), matrix_(sys.matrix) {
    matrix_.makeCompressed();
    fnorm_ = std::sqrt(matrix_.coeffs().abs2().sum());
    lu_.compute(matrix_);
    if (lu_.info() != Eigen::Success) {
      throw SolverError("forward factorization failed", std::nan(""));
    }
  }

  static constexpr double kResidualTol = 1e-10;

  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const {
    Eigen::VectorXcd x = lu_.solve(rhs);
    const double bnorm = rhs.norm();
    // One round of iterative refinement when the plain relative residual
    // misses the tolerance; the weakly coupled systems sit near the
    // double-precision residual floor eps * |A| * |x|.
    double resid = (matrix_ * x - rhs).norm();
    if (!(resid <= kResidualTol * bnorm)) {
      x += lu_.solve(rhs - matrix_ * x);
      resid = (matrix_ * x - rhs).norm();
    }
    // Accept on relative residual or on normwise backward error; the
    // latter is the attainable criterion once |A| |x| >> |b|.
    if (!(resid <= kResidualTol * bnorm) &&
        !(resid <= kResidualTol * (bnorm + fnorm_ * x.norm())) &&
        bnorm > 0.0) {
      throw SolverError("forward solve residual above tolerance", resid);
    }
    if (!x.allFinite()) {
      throw SolverError("forward solve produced non-finite values", resid);
    }
    return x;
  }

  // Solves conj(S) z = c by conjugation: S w = conj(c), z = conj(w).
  Eigen::VectorXcd solve_conjugate(const Eigen::VectorXcd& rhs) const {
    return solve(rhs.conjugate()).conjugate();
  }

  const Mesh& mesh() const { return *mesh_; }

 private:
  const Mesh* mesh_;
  SparseComplex matrix_;
  double fnorm_ = 0.0;
  Eigen::SparseLU<SparseComplex> lu_;
};

inline ComplexField solve(const SparseSystem& sys) {
  FactorizedSystem fact(sys);
  ComplexField out(*sys.mesh, fact.solve(sys.rhs));
  out.check_finite("forward solution");
  return out;
}

// Boundary values of a nodal field, ordered along the boundary loop.
struct BoundaryTrace {
  const Mesh* mesh = nullptr;
  Eigen::VectorXcd v;
};

inline BoundaryTrace boundary_trace(const ComplexField& field) {
  field.check_size();
  const Mesh& mesh = *field.mesh;
  BoundaryTrace tr;
  tr.mesh = &mesh;
  tr.v.resize(mesh.n_boundary());
  for (int k = 0; k < mesh.n_boundary(); ++k) {
    tr.v[k] = field[mesh.boundary_loop()[k]];
  }
  return tr;
}

// (u, v)_Gamma = integral of u * conj(v) along the boundary, exact for
// P1 traces on the boundary polygon.
inline Complex boundary_l2_product(const Mesh& mesh, const Eigen::VectorXcd& u,
                                   const Eigen::VectorXcd& v) {
  const int B = mesh.n_boundary();
  if (u.size() != B || v.size() != B) {
    throw std::invalid_argument("boundary product: trace size mismatch");
  }
  const auto& len = mesh.boundary_edge_length();
  Complex s(0.0, 0.0);
  for (int k = 0; k < B; ++k) {
    const int k1 = (k + 1) % B;
    s += len[k] / 6.0 *
         (2.0 * u[k] * std::conj(v[k]) + u[k] * std::conj(v[k1]) +
          u[k1] * std::conj(v[k]) + 2.0 * u[k1] * std::conj(v[k1]));
  }
  return s;
}

inline double boundary_l2_norm_sq(const Mesh& mesh, const Eigen::VectorXcd& u) {
  return boundary_l2_product(mesh, u, u).real();
}

// Applies the boundary mass matrix B (real, cyclic tridiagonal) to a
// trace vector: (B w)_k = sum over edges touching loop node k.
inline Eigen::VectorXcd boundary_mass_apply(const Mesh& mesh,
                                            const Eigen::VectorXcd& w) {
  const int B = mesh.n_boundary();
  if (w.size() != B) {
    throw std::invalid_argument("boundary mass: trace size mismatch");
  }
  const auto& len = mesh.boundary_edge_length();
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(B);
  for (int k = 0; k < B; ++k) {
    const int k1 = (k + 1) % B;
    out[k] += len[k] / 6.0 * (2.0 * w[k] + w[k1]);
    out[k1] += len[k] / 6.0 * (w[k] + 2.0 * w[k1]);
  }
  return out;
}

// Solves form * x = rhs for a caller-supplied SPD bilinear form. With
// use_zero_boundary the boundary rows/columns are eliminated so the
// result vanishes on the boundary exactly.
inline RealField h1_projection(const Mesh& mesh, const SparseReal& form,
                               const Eigen::VectorXd& rhs,
                               bool use_zero_boundary) {
  if (rhs.size() != mesh.n_nodes()) {
    throw std::invalid_argument("projection: rhs size != node count");
  }
  SparseReal A = form;
  Eigen::VectorXd b = rhs;
  if (use_zero_boundary) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros());
    for (int col = 0; col < A.outerSize(); ++col) {
      for (SparseReal::InnerIterator it(A, col); it; ++it) {
        if (mesh.is_boundary(static_cast<int>(it.row())) ||
            mesh.is_boundary(static_cast<int>(it.col()))) {
          continue;
        }
        trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int v = 0; v < mesh.n_nodes(); ++v) {
      if (mesh.is_boundary(v)) {
        trip.emplace_back(v, v, 1.0);
        b[v] = 0.0;
      }
    }
    A.setZero();
    A.setFromTriplets(trip.begin(), trip.end());
  }
  Eigen::SimplicialLDLT<SparseReal> ldlt(A);
  if (ldlt.info() != Eigen::Success) {
    throw SolverError("projection factorization failed", std::nan(""));
  }
  Eigen::VectorXd x = ldlt.solve(b);
  const double resid = (A * x - b).norm();
  if (!(resid <= 1e-10 * b.norm()) && b.norm() > 0.0) {
    throw SolverError("projection residual above tolerance", resid);
  }
  RealField out(mesh, std::move(x));
  out.check_finite("projection");
  return out;
}

// Degree-5 exact quadrature on a triangle (7 points, barycentric).
struct TriQuadPoint {
  double b0, b1, b2, w;
};

inline const std::array<TriQuadPoint, 7>& tri_quadrature_d5() {
  static const std::array<TriQuadPoint, 7> rule = [] {
    const double s15 = std::sqrt(15.0);
    const double a = (6.0 + s15) / 21.0, wa = (155.0 + s15) / 1200.0;
    const double b = (6.0 - s15) / 21.0, wb = (155.0 - s15) / 1200.0;
    return std::array<TriQuadPoint, 7>{{{1.0 / 3, 1.0 / 3, 1.0 / 3, 9.0 / 40},
                                        {a, a, 1 - 2 * a, wa},
                                        {a, 1 - 2 * a, a, wa},
                                        {1 - 2 * a, a, a, wa},
                                        {b, b, 1 - 2 * b, wb},
                                        {b, 1 - 2 * b, b, wb},
                                        {1 - 2 * b, b, b, wb}}};
  }();
  return rule;
}

}  // namespace tscm
