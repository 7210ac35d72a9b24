#pragma once

// Self-contained verification checks: manufactured-solution convergence,
// adjoint consistency, finite-difference gradient oracles, symmetry and
// coercivity properties, and a deliberately broken negative control.
// Each check builds its own small fixture and reports a measured value
// against its tolerance.

#include <functional>
#include <random>
#include <vector>

#include "tscm/io.hpp"

namespace tscm {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;
};

namespace verify {

// ----------------------------------------------------------------
// Manufactured solution A* = x^2 + i y^2 with sigma = 2 + x (already P1)
// on the meshed polygon; volume and boundary data follow from the strong
// form, so the discrete error is pure discretization error.

struct ManufacturedRun {
  double h = 0.0;
  double l2_error = 0.0;
  double trace_error = 0.0;
};

inline ManufacturedRun manufactured_run(double target_h) {
  const double mu_inv = 1.5;
  const double omega = 3.0;
  const Mesh mesh = build_disk_mesh(1.0, target_h, 7);

  RealField sigma = RealField::zeros(mesh);
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    sigma[v] = 2.0 + mesh.nodes[v].x();
  }
  SparseSystem sys = assemble_system(mesh, mu_inv, omega, sigma);

  auto exact = [](const Vec2& p) {
    return Complex(p.x() * p.x(), p.y() * p.y());
  };
  // f = -div(mu_inv grad A*) + i omega sigma A*
  auto source = [&](const Vec2& p) {
    return -mu_inv * Complex(2.0, 2.0) +
           Complex(0.0, omega) * (2.0 + p.x()) * exact(p);
  };
  // Volume load, degree-5 quadrature (exact: integrand is quartic).
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double A = mesh.triangle_area()[t];
    for (const auto& q : tri_quadrature_d5()) {
      const Vec2 p = q.b0 * mesh.nodes[tri[0]] + q.b1 * mesh.nodes[tri[1]] +
                     q.b2 * mesh.nodes[tri[2]];
      const Complex f = source(p) * (A * q.w);
      sys.rhs[tri[0]] += f * q.b0;
      sys.rhs[tri[1]] += f * q.b1;
      sys.rhs[tri[2]] += f * q.b2;
    }
  }
  // Boundary load e = mu_inv grad A* . n, linear along each polygon edge.
  const auto& loop = mesh.boundary_loop();
  const int B = mesh.n_boundary();
  for (int k = 0; k < B; ++k) {
    const int a = loop[k], b = loop[(k + 1) % B];
    const Vec2 pa = mesh.nodes[a], pb = mesh.nodes[b];
    const Vec2 tau = pb - pa;
    const double L = tau.norm();
    const Vec2 n(tau.y() / L, -tau.x() / L);  // outward for a CCW loop
    auto e_at = [&](const Vec2& p) {
      return mu_inv * (Complex(2.0 * p.x(), 0.0) * n.x() +
                       Complex(0.0, 2.0 * p.y()) * n.y());
    };
    const Complex ea = e_at(pa), eb = e_at(pb);
    sys.rhs[a] += L / 6.0 * (2.0 * ea + eb);
    sys.rhs[b] += L / 6.0 * (ea + 2.0 * eb);
  }

  const ComplexField Ah = solve(sys);

  ManufacturedRun out;
  out.h = mesh.h;
  double err2 = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double A = mesh.triangle_area()[t];
    for (const auto& q : tri_quadrature_d5()) {
      const Vec2 p = q.b0 * mesh.nodes[tri[0]] + q.b1 * mesh.nodes[tri[1]] +
                     q.b2 * mesh.nodes[tri[2]];
      const Complex diff = q.b0 * Ah[tri[0]] + q.b1 * Ah[tri[1]] +
                           q.b2 * Ah[tri[2]] - exact(p);
      err2 += A * q.w * std::norm(diff);
    }
  }
  out.l2_error = std::sqrt(err2);

  BoundaryTrace tr = boundary_trace(Ah);
  Eigen::VectorXcd exact_tr(B);
  for (int k = 0; k < B; ++k) exact_tr[k] = exact(mesh.nodes[loop[k]]);
  out.trace_error = std::sqrt(boundary_l2_norm_sq(mesh, tr.v - exact_tr));
  return out;
}

// L2 error ratios across two refinements; second order means ~4.
inline std::vector<double> manufactured_order_ratios() {
  std::vector<double> ratios;
  ManufacturedRun prev;
  bool first = true;
  for (double th : {0.2, 0.1, 0.05}) {
    const ManufacturedRun run = manufactured_run(th);
    if (!first) ratios.push_back(prev.l2_error / run.l2_error);
    prev = run;
    first = false;
  }
  return ratios;
}

// ----------------------------------------------------------------
// Small inverse-problem fixture shared by the gradient checks.

struct FdFixture {
  Mesh mesh;
  double mu_inv = 0.0;
  ExcitationPlan plan;
  MeasurementSet ms;
  RegParams params;

  static FdFixture make(double target_h = 0.25, int n_arcs = 4,
                        int n_omegas = 2, double rho = 0.01) {
    FdFixture fx;
    fx.mesh = build_disk_mesh(1.0, target_h, n_arcs);
    PhantomSpec ph;
    ph.disks.push_back({Vec2(0.25, -0.1), 0.3});
    ph.sigma1 = 20.0;
    ph.sigma2 = 2.0;
    fx.mu_inv = 10.0 * 2.0 * std::numbers::pi * 32768.0 * ph.sigma1;
    fx.plan = ExcitationPlan::preset(n_omegas, n_arcs);
    fx.ms = make_synthetic_measurements(fx.mesh, fx.mesh, fx.mu_inv, ph,
                                        fx.plan, rho, 7);
    fx.params.sigma1 = ph.sigma1;
    fx.params.sigma2 = ph.sigma2;
    fx.params.eps_heaviside = fx.mesh.h * fx.mesh.h;
    fx.params.eps_tv = fx.params.eps_heaviside;
    double power = 0.0;
    for (const auto& tr : fx.ms.m) power += boundary_l2_norm_sq(fx.mesh, tr);
    fx.params.fid_weight = 1.0 / power;
    return fx;
  }

  Problem problem() const { return Problem(mesh, mu_inv, params, ms); }

  // Base state: constant level set (the algorithm's own start), smooth
  // positive relaxed conductivity.
  ContinuationState state(double lambda) const {
    ContinuationState st;
    st.phi = RealField::constant(mesh, -1.0);
    st.sigma_l2 = RealField::zeros(mesh);
    for (int v = 0; v < mesh.n_nodes(); ++v) {
      const Vec2& p = mesh.nodes[v];
      st.sigma_l2[v] = 1.0 + 0.4 * std::sin(2.0 * p.x()) * std::cos(p.y());
    }
    st.lambda = lambda;
    st.refresh(params);
    return st;
  }
};

// Surrogate objective whose exact derivatives the gradient operators
// implement. Misfit part identical to the production objective.
inline double fd_objective(const Problem& pb, const ContinuationState& st) {
  const ObjectiveValue obj = pb.evaluate(st);
  return obj.fidelity +
         reg_value_grad_consistent(st, pb.params(), pb.mass());
}

struct FdCheck {
  double max_rel_err = 0.0;
  int directions = 0;
};

// Compares <grad, h>_M against central differences of the surrogate
// objective for perturbations of the level set (interior directions) and
// of the relaxed conductivity.
inline FdCheck fd_gradient_check(const FdFixture& fx, double lambda,
                                 int n_directions, std::uint64_t seed,
                                 bool flip_sign = false) {
  const Problem pb = fx.problem();
  const ContinuationState base = fx.state(lambda);
  const Problem::Gradients gr = pb.gradients(base);
  const double sgn = flip_sign ? -1.0 : 1.0;

  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FdCheck out;
  out.directions = n_directions;
  for (int d = 0; d < n_directions; ++d) {
    RealField h_phi = RealField::zeros(fx.mesh);
    RealField h_sl2 = RealField::zeros(fx.mesh);
    for (int v = 0; v < fx.mesh.n_nodes(); ++v) {
      h_phi[v] = fx.mesh.is_boundary(v) ? 0.0 : u(eng);
      h_sl2[v] = u(eng);
    }
    for (int which = 0; which < 2; ++which) {
      const RealField& h = (which == 0) ? h_phi : h_sl2;
      const double hn = std::sqrt(pb.l2_norm_sq(h.v));
      if (hn == 0.0) continue;
      const double base_scale = std::sqrt(
          pb.l2_norm_sq(which == 0 ? base.phi.v : base.sigma_l2.v));
      const double t = 1e-4 * std::max(base_scale, 1.0) / hn;
      auto path = [&](double s) {
        ContinuationState st = base;
        if (which == 0) {
          st.phi = RealField(fx.mesh, base.phi.v + s * h.v);
        } else {
          st.sigma_l2 = RealField(fx.mesh, base.sigma_l2.v + s * h.v);
        }
        st.refresh(pb.params());
        return fd_objective(pb, st);
      };
      const double fd = (path(t) - path(-t)) / (2.0 * t);
      const double an =
          sgn * ((which == 0) ? gr.phi.v.dot(pb.mass() * h.v)
                              : gr.sl2.v.dot(pb.mass() * h.v));
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-12});
      out.max_rel_err = std::max(out.max_rel_err, std::abs(fd - an) / denom);
    }
  }
  return out;
}

// Misfit-only directional check: perturbs sigma directly, so the chain
// rule stays out of the picture; this pins the adjoint computation.
inline FdCheck fd_fidelity_check(const FdFixture& fx, int n_directions,
                                 std::uint64_t seed) {
  const Mesh& mesh = fx.mesh;
  RealField sigma = RealField::zeros(mesh);
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    const Vec2& p = mesh.nodes[v];
    sigma[v] = 3.0 + p.x() + 0.5 * p.y() * p.y();
  }
  const SparseReal M = assemble_mass(mesh);

  ForwardSolution sol = impedance_map(mesh, fx.mu_inv, sigma, fx.plan);
  std::vector<Eigen::VectorXcd> adjoints(fx.plan.n_cases());
  for (int k = 0; k < fx.plan.n_omegas(); ++k) {
    for (int c = 0; c < fx.plan.n_coils(); ++c) {
      const int cs = fx.plan.index(k, c);
      const Eigen::VectorXcd r = sol.traces[cs] - fx.ms.m[cs];
      adjoints[cs] =
          solve_adjoint(mesh, fx.mu_inv, fx.plan.omegas[k], sigma, r).v;
    }
  }
  const RealField grad =
      grad_fidelity_sigma(mesh, sol.fields, adjoints, fx.plan.omegas);

  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FdCheck out;
  out.directions = n_directions;
  for (int d = 0; d < n_directions; ++d) {
    RealField h = RealField::zeros(mesh);
    for (int v = 0; v < mesh.n_nodes(); ++v) h[v] = u(eng);
    const double hn = std::sqrt(h.v.dot(M * h.v));
    const double sn = std::sqrt(sigma.v.dot(M * sigma.v));
    const double t = 1e-4 * sn / hn;
    auto F = [&](double s) {
      RealField st(mesh, sigma.v + s * h.v);
      ForwardSolution fs = impedance_map(mesh, fx.mu_inv, st, fx.plan);
      return fidelity(mesh, fs.traces, fx.ms);
    };
    const double fd = (F(t) - F(-t)) / (2.0 * t);
    const double an = grad.v.dot(M * h.v);
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-300});
    out.max_rel_err = std::max(out.max_rel_err, std::abs(fd - an) / denom);
  }
  return out;
}

// Discrete adjoint identity: forward-form(dA, Z) = -(dA, r)_Gamma.
inline double adjoint_identity_error(const FdFixture& fx, std::uint64_t seed) {
  const Mesh& mesh = fx.mesh;
  RealField sigma = RealField::constant(mesh, 2.5);
  const double omega = fx.plan.omegas[0];
  SparseSystem sys = assemble_system(mesh, fx.mu_inv, omega, sigma);
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXcd r(mesh.n_boundary());
  for (int i = 0; i < mesh.n_boundary(); ++i) r[i] = Complex(u(eng), u(eng));
  const ComplexField Z = solve_adjoint(mesh, fx.mu_inv, omega, sigma, r);

  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXcd dA(mesh.n_nodes());
    for (int v = 0; v < mesh.n_nodes(); ++v) dA[v] = Complex(u(eng), u(eng));
    const Complex lhs = dA.transpose() * (sys.matrix * Z.v.conjugate());
    Eigen::VectorXcd dA_tr(mesh.n_boundary());
    for (int i = 0; i < mesh.n_boundary(); ++i) {
      dA_tr[i] = dA[mesh.boundary_loop()[i]];
    }
    const Complex rhs = -boundary_l2_product(mesh, dA_tr, r);
    worst = std::max(worst, std::abs(lhs - rhs) /
                                std::max(std::abs(lhs), std::abs(rhs)));
  }
  return worst;
}

// Rotational equivariance: constant sigma on a one-arc-symmetric mesh,
// coil k's trace is coil 0's trace circularly shifted.
inline double rotation_symmetry_error() {
  const Mesh mesh = build_disk_mesh(1.0, 0.2, 7);
  const double mu_inv = 1e5;
  RealField sigma = RealField::constant(mesh, 3.0);
  ExcitationPlan plan = ExcitationPlan::preset(1, 7);
  ForwardSolution sol = impedance_map(mesh, mu_inv, sigma, plan);
  const int B = mesh.n_boundary();
  const int per_arc = B / 7;
  double worst = 0.0;
  for (int c = 1; c < 7; ++c) {
    const auto& t0 = sol.traces[0];
    const auto& tc = sol.traces[c];
    double err2 = 0.0;
    for (int i = 0; i < B; ++i) {
      err2 += std::norm(tc[(i + c * per_arc) % B] - t0[i]);
    }
    worst = std::max(worst, std::sqrt(err2) / t0.norm());
  }
  return worst;
}

// Fidelity invariance under simultaneous rotation of phantom and data.
inline double fidelity_rotation_error() {
  const Mesh mesh = build_disk_mesh(1.0, 0.2, 7);
  const double mu_inv = 1e5;
  const ExcitationPlan plan = ExcitationPlan::preset(1, 7);
  const double rot = 2.0 * std::numbers::pi / 7.0;
  PhantomSpec ph;
  ph.disks.push_back({Vec2(0.3, 0.1), 0.25});
  PhantomSpec ph_rot;
  ph_rot.disks.push_back(
      {Vec2(0.3 * std::cos(rot) - 0.1 * std::sin(rot),
            0.3 * std::sin(rot) + 0.1 * std::cos(rot)),
       0.25});
  const MeasurementSet m1 =
      make_synthetic_measurements(mesh, mesh, mu_inv, ph, plan, 0.0, 1);
  const MeasurementSet m2 =
      make_synthetic_measurements(mesh, mesh, mu_inv, ph_rot, plan, 0.0, 1);
  RealField probe = RealField::constant(mesh, 2.0);
  ForwardSolution sol = impedance_map(mesh, mu_inv, probe, plan);
  const double f1 = fidelity(mesh, sol.traces, m1);
  const double f2 = fidelity(mesh, sol.traces, m2);
  return std::abs(f1 - f2) / std::max(f1, f2);
}

// R_W(w) >= |w|^2 with equality, over random fields.
inline double coercivity_worst_defect(int n_fields, std::uint64_t seed) {
  const Mesh mesh = build_disk_mesh(1.0, 0.2, 4);
  const SparseReal M = assemble_mass(mesh);
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < n_fields; ++i) {
    Eigen::VectorXd w(mesh.n_nodes());
    for (int v = 0; v < mesh.n_nodes(); ++v) w[v] = u(eng);
    const double rw = reg_w_value(mesh, M, w);
    const double n2 = w.dot(M * w);
    worst = std::max(worst, std::abs(rw - n2) / n2);
  }
  return worst;
}

// Smoothed TV of a sharp disk against the jump-times-perimeter value.
inline double tv_perimeter_rel_err() {
  const double target_h = 0.025;
  const Mesh mesh = build_disk_mesh(1.0, target_h, 4);
  PhantomSpec ph;
  ph.disks.push_back({Vec2(0.0, 0.0), 0.5});
  const Eigen::VectorXd sigma = indicator_field(mesh, ph);
  const double eps = target_h * target_h;
  const double tv = detail::smoothed_tv(mesh, sigma, eps);
  const double exact = (ph.sigma1 - ph.sigma2) * 2.0 * std::numbers::pi * 0.5;
  return std::abs(tv - exact) / exact;
}

// Misfit of noisy data against clean traces scales as rho^2.
inline double noise_slope() {
  const Mesh mesh = build_disk_mesh(1.0, 0.15, 4);
  const double mu_inv = 1e5;
  const ExcitationPlan plan = ExcitationPlan::preset(1, 4);
  PhantomSpec ph;
  ph.disks.push_back({Vec2(0.2, 0.2), 0.3});
  const MeasurementSet clean =
      make_synthetic_measurements(mesh, mesh, mu_inv, ph, plan, 0.0, 3);
  std::vector<double> xs, ys;
  for (double rho : {0.01, 0.05, 0.10, 0.20}) {
    const MeasurementSet noisy =
        make_synthetic_measurements(mesh, mesh, mu_inv, ph, plan, rho, 3);
    const double f = fidelity(mesh, clean.m, noisy);
    xs.push_back(std::log(rho));
    ys.push_back(std::log(f));
  }
  const int n = static_cast<int>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace verify

// The packaged oracle suite behind the `verify` CLI subcommand.
inline std::vector<CheckResult> run_verification() {
  std::vector<CheckResult> out;
  auto add = [&](const std::string& name, double measured, double tol,
                 bool pass_if_below = true, const std::string& note = "") {
    CheckResult r;
    r.name = name;
    r.measured = measured;
    r.tolerance = tol;
    r.pass = pass_if_below ? (measured <= tol) : (measured > tol);
    r.note = note;
    out.push_back(r);
  };

  const auto ratios = verify::manufactured_order_ratios();
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    add("fem_order_ratio_" + std::to_string(i),
        std::abs(ratios[i] - 4.0), 0.5, true,
        "L2 error ratio " + ioutil::fmt(ratios[i]) + " vs 4.0");
  }

  const verify::FdFixture fx = verify::FdFixture::make();
  add("adjoint_identity", verify::adjoint_identity_error(fx, 11), 1e-10);
  add("fd_fidelity_gradient", verify::fd_fidelity_check(fx, 5, 17).max_rel_err,
      1e-4);
  for (double lam : {0.0, 0.5, 1.0}) {
    add("fd_objective_gradient_lambda_" + ioutil::fmt(lam),
        verify::fd_gradient_check(fx, lam, 5, 23).max_rel_err, 1e-3);
  }
  add("fd_negative_control_detects_sign_flip",
      verify::fd_gradient_check(fx, 0.5, 2, 23, /*flip_sign=*/true).max_rel_err,
      1e-3, /*pass_if_below=*/false, "flipped gradient must fail the oracle");
  add("rotation_symmetry", verify::rotation_symmetry_error(), 1e-10);
  add("fidelity_rotation_invariance", verify::fidelity_rotation_error(), 1e-8);
  add("coercivity_rw_equality", verify::coercivity_worst_defect(100, 5), 1e-12);
  add("tv_perimeter", verify::tv_perimeter_rel_err(), 0.10);
  add("noise_quadratic_scaling", std::abs(verify::noise_slope() - 2.0), 0.02);
  return out;
}

}  // namespace tscm
