#pragma once

// Multi-frequency, multi-coil forward problem: impedance traces, the
// misfit functional against boundary measurements, the adjoint problem
// reusing the forward factorization, and the misfit gradient with
// respect to the conductivity.

#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "tscm/fem.hpp"

namespace tscm {

struct ExcitationPlan {
  Eigen::VectorXd omegas;         // angular frequencies, strictly positive
  std::vector<int> coils;         // boundary arc indices
  std::vector<double> amplitudes; // surface current per coil

  // Paper-style plan: omega_i = 2*pi*2^(15+i), coils 0..n_coils-1,
  // unit amplitudes.
  static ExcitationPlan preset(int n_omegas, int n_coils) {
    ExcitationPlan plan;
    plan.omegas.resize(n_omegas);
    for (int i = 0; i < n_omegas; ++i) {
      plan.omegas[i] = 2.0 * std::numbers::pi * std::pow(2.0, 15 + i);
    }
    plan.coils.resize(n_coils);
    plan.amplitudes.assign(n_coils, 1.0);
    for (int c = 0; c < n_coils; ++c) plan.coils[c] = c;
    return plan;
  }

  int n_omegas() const { return static_cast<int>(omegas.size()); }
  int n_coils() const { return static_cast<int>(coils.size()); }
  int n_cases() const { return n_omegas() * n_coils(); }
  int index(int k, int c) const { return k * n_coils() + c; }

  void validate() const {
    if (omegas.size() == 0 || coils.empty()) {
      throw std::invalid_argument("plan: empty frequency or coil set");
    }
    if (amplitudes.size() != coils.size()) {
      throw std::invalid_argument("plan: amplitude count != coil count");
    }
    for (int i = 0; i < n_omegas(); ++i) {
      if (!(omegas[i] > 0.0)) throw std::invalid_argument("plan: omega <= 0");
      for (int j = 0; j < i; ++j) {
        if (omegas[i] == omegas[j]) {
          throw std::invalid_argument("plan: duplicate omega");
        }
      }
    }
  }

  bool operator==(const ExcitationPlan& o) const {
    return omegas == o.omegas && coils == o.coils && amplitudes == o.amplitudes;
  }
};

// Boundary measurements for every (omega, coil) pair, stored as full
// nodal traces in boundary-loop order.
struct MeasurementSet {
  ExcitationPlan plan;
  int n_boundary = 0;
  std::vector<Eigen::VectorXcd> m;  // plan.n_cases() traces
  double rho = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    plan.validate();
    if (static_cast<int>(m.size()) != plan.n_cases()) {
      throw std::invalid_argument("measurements: case count mismatch");
    }
    for (const auto& tr : m) {
      if (tr.size() != n_boundary || !tr.allFinite()) {
        throw std::invalid_argument("measurements: bad trace");
      }
    }
  }
};

namespace detail {

template <typename Fn>
void parallel_over_omegas(int n_omegas, int workers, Fn&& fn) {
  if (workers <= 1 || n_omegas <= 1) {
    for (int k = 0; k < n_omegas; ++k) fn(k);
    return;
  }
  const int n_threads = std::min(workers, n_omegas);
  std::mutex err_mutex;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      for (int k = t; k < n_omegas; k += n_threads) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

inline std::string case_label(const ExcitationPlan& plan, int k, int c) {
  return "omega=" + std::to_string(plan.omegas[k]) +
         " coil=" + std::to_string(plan.coils[c]);
}

}  // namespace detail

struct ForwardSolution {
  std::vector<Eigen::VectorXcd> fields;  // nodal A per (omega, coil)
  std::vector<Eigen::VectorXcd> traces;  // boundary-loop values per case
};

// Solves the forward problem for every (omega, coil): one factorization
// per omega, shared across all coil right-hand sides. Case order is
// fixed, so reductions downstream are deterministic for any worker count.
inline ForwardSolution impedance_map(const Mesh& mesh, double mu_inv,
                                     const RealField& sigma,
                                     const ExcitationPlan& plan,
                                     int workers = 1) {
  plan.validate();
  ForwardSolution out;
  out.fields.resize(plan.n_cases());
  out.traces.resize(plan.n_cases());
  detail::parallel_over_omegas(plan.n_omegas(), workers, [&](int k) {
    SparseSystem sys = assemble_system(mesh, mu_inv, plan.omegas[k], sigma);
    FactorizedSystem fact(sys);
    for (int c = 0; c < plan.n_coils(); ++c) {
      try {
        sys.rhs.setZero();
        apply_neumann_rhs(sys, plan.coils[c], plan.amplitudes[c]);
        Eigen::VectorXcd A = fact.solve(sys.rhs);
        Eigen::VectorXcd tr(mesh.n_boundary());
        for (int i = 0; i < mesh.n_boundary(); ++i) {
          tr[i] = A[mesh.boundary_loop()[i]];
        }
        out.fields[plan.index(k, c)] = std::move(A);
        out.traces[plan.index(k, c)] = std::move(tr);
      } catch (const SolverError& e) {
        throw SolverError(
            std::string(e.what()) + " at " + detail::case_label(plan, k, c),
            e.residual());
      }
    }
  });
  return out;
}

// Sum over all cases of the boundary-L2 norm of (trace - m).
inline double fidelity(const Mesh& mesh,
                       const std::vector<Eigen::VectorXcd>& traces,
                       const MeasurementSet& ms) {
  if (!(ms.plan.n_cases() == static_cast<int>(traces.size())) ||
      ms.n_boundary != mesh.n_boundary()) {
    throw std::invalid_argument("fidelity: measurement index mismatch");
  }
  double f = 0.0;
  for (int i = 0; i < ms.plan.n_cases(); ++i) {
    if (traces[i].size() != ms.n_boundary) {
      throw std::invalid_argument("fidelity: trace size mismatch");
    }
    f += boundary_l2_norm_sq(mesh, traces[i] - ms.m[i]);
  }
  return f;
}

// Adjoint solve against an already-computed factorization of the forward
// system. The adjoint matrix is the conjugate of the complex-symmetric
// forward matrix, so conj(S) Z = -B r is solved as S w = -B conj(r),
// Z = conj(w).
inline Eigen::VectorXcd adjoint_solve(const FactorizedSystem& fact,
                                      const Eigen::VectorXcd& residual_trace) {
  const Mesh& mesh = fact.mesh();
  Eigen::VectorXcd load = boundary_mass_apply(mesh, residual_trace.conjugate());
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(mesh.n_nodes());
  for (int i = 0; i < mesh.n_boundary(); ++i) {
    rhs[mesh.boundary_loop()[i]] = -load[i];
  }
  return fact.solve(rhs).conjugate();
}

inline ComplexField solve_adjoint(const Mesh& mesh, double mu_inv, double omega,
                                  const RealField& sigma,
                                  const Eigen::VectorXcd& residual_trace) {
  if (residual_trace.size() != mesh.n_boundary()) {
    throw std::invalid_argument("adjoint: residual not on mesh boundary");
  }
  SparseSystem sys = assemble_system(mesh, mu_inv, omega, sigma);
  FactorizedSystem fact(sys);
  ComplexField Z(mesh, adjoint_solve(fact, residual_trace));
  Z.check_finite("adjoint solution");
  return Z;
}

// Dual (load-vector) form of the misfit gradient: the exact derivative
// of the discrete fidelity under nodal sigma perturbations,
// g_k = sum over cases of 2 Re[i omega (A Zbar, phi_k)] with the cubic
// product integrated exactly.
inline Eigen::VectorXd grad_fidelity_sigma_dual(
    const Mesh& mesh, const std::vector<Eigen::VectorXcd>& fields,
    const std::vector<Eigen::VectorXcd>& adjoints,
    const Eigen::VectorXd& omegas) {
  const int n_coils = static_cast<int>(fields.size()) /
                      std::max<int>(1, static_cast<int>(omegas.size()));
  if (fields.size() != adjoints.size() || fields.empty() ||
      static_cast<int>(fields.size()) !=
          static_cast<int>(omegas.size()) * n_coils) {
    throw std::invalid_argument("gradient: missing forward/adjoint pairs");
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(mesh.n_nodes());
  for (std::size_t cs = 0; cs < fields.size(); ++cs) {
    const Complex iw(0.0, omegas[static_cast<int>(cs) / n_coils]);
    const auto& A = fields[cs];
    const auto& Z = adjoints[cs];
    if (A.size() != mesh.n_nodes() || Z.size() != mesh.n_nodes()) {
      throw std::invalid_argument("gradient: field not nodal");
    }
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      const auto& tri = mesh.triangles[t];
      const double area = mesh.triangle_area()[t];
      for (int k = 0; k < 3; ++k) {
        Complex acc(0.0, 0.0);
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            acc += detail::triple_product_coeff(k, i, j, area) * A[tri[i]] *
                   std::conj(Z[tri[j]]);
          }
        }
        g[tri[k]] += 2.0 * (iw * acc).real();
      }
    }
  }
  return g;
}

// Nodal misfit gradient: mass-matrix projection of the dual vector.
inline RealField grad_fidelity_sigma(const Mesh& mesh,
                                     const std::vector<Eigen::VectorXcd>& fields,
                                     const std::vector<Eigen::VectorXcd>& adjoints,
                                     const Eigen::VectorXd& omegas) {
  const Eigen::VectorXd g =
      grad_fidelity_sigma_dual(mesh, fields, adjoints, omegas);
  return h1_projection(mesh, assemble_mass(mesh), g, false);
}

// Linear interpolation of a boundary trace from one disk mesh onto the
// boundary nodes of another, parametrized by polar angle.
inline Eigen::VectorXcd interp_boundary_trace(const Mesh& from,
                                              const Eigen::VectorXcd& trace,
                                              const Mesh& to) {
  const int Bf = from.n_boundary();
  const int Bt = to.n_boundary();
  const double two_pi = 2.0 * std::numbers::pi;
  auto angle_of = [&](const Mesh& m, int loop_k) {
    const Vec2& p = m.nodes[m.boundary_loop()[loop_k]];
    double a = std::atan2(p.y(), p.x());
    if (a < 0.0) a += two_pi;
    return a;
  };
  // Rotate the source loop so its angles are ascending from the minimum;
  // generated meshes already start at angle zero.
  std::vector<double> th(Bf);
  for (int k = 0; k < Bf; ++k) th[k] = angle_of(from, k);
  const int shift = static_cast<int>(
      std::min_element(th.begin(), th.end()) - th.begin());
  std::vector<double> ths(Bf);
  for (int k = 0; k < Bf; ++k) ths[k] = th[(k + shift) % Bf];
  Eigen::VectorXcd out(Bt);
  for (int i = 0; i < Bt; ++i) {
    const double a = angle_of(to, i);
    // Find the loop segment whose angle interval contains a.
    int k = static_cast<int>(
        std::upper_bound(ths.begin(), ths.end(), a) - ths.begin()) - 1;
    if (k < 0) k = Bf - 1;  // wrap-around segment
    const int k1 = (k + 1) % Bf;
    double span = ths[k1] - ths[k];
    double off = a - ths[k];
    if (span <= 0.0) span += two_pi;
    if (off < 0.0) off += two_pi;
    const double w = (span > 0.0) ? off / span : 0.0;
    out[i] = (1.0 - w) * trace[(k + shift) % Bf] + w * trace[(k1 + shift) % Bf];
  }
  return out;
}

// Synthetic boundary data: clean traces of the phantom conductivity
// computed on data_mesh (pass the inversion mesh itself to disable the
// finer data mesh), restricted to the inversion mesh boundary, plus
// seeded complex Gaussian noise scaled to relative level rho:
//   m = clean + rho * (|clean| / sqrt(2 B)) * (g_re + i g_im) per node,
// so that E|m - clean|^2 = rho^2 |clean|^2 over the trace vector.
inline MeasurementSet make_synthetic_measurements(
    const Mesh& inv_mesh, const Mesh& data_mesh, double mu_inv,
    const PhantomSpec& phantom, const ExcitationPlan& plan, double rho,
    std::uint64_t seed, int workers = 1) {
  if (rho < 0.0) throw std::invalid_argument("synthetic data: rho < 0");
  const bool same = &inv_mesh == &data_mesh;
  RealField sigma(data_mesh, indicator_field(data_mesh, phantom));
  ForwardSolution sol = impedance_map(data_mesh, mu_inv, sigma, plan, workers);

  MeasurementSet ms;
  ms.plan = plan;
  ms.n_boundary = inv_mesh.n_boundary();
  ms.rho = rho;
  ms.seed = seed;
  ms.m.resize(plan.n_cases());
  for (int k = 0; k < plan.n_omegas(); ++k) {
    for (int c = 0; c < plan.n_coils(); ++c) {
      const int cs = plan.index(k, c);
      Eigen::VectorXcd clean =
          same ? sol.traces[cs]
               : interp_boundary_trace(data_mesh, sol.traces[cs], inv_mesh);
      if (rho > 0.0) {
        std::seed_seq sq{static_cast<std::uint32_t>(seed),
                         static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(k),
                         static_cast<std::uint32_t>(c)};
        std::mt19937_64 eng(sq);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double scale =
            rho * clean.norm() / std::sqrt(2.0 * ms.n_boundary);
        for (int i = 0; i < ms.n_boundary; ++i) {
          const double gr = gauss(eng);
          const double gi = gauss(eng);
          clean[i] += scale * Complex(gr, gi);
        }
      }
      ms.m[cs] = std::move(clean);
    }
  }
  ms.validate();
  return ms;
}

}  // namespace tscm
