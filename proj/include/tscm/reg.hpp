#pragma once

// Level-set parametrization of the piecewise-constant conductivity, the
// continuation regularizer, and the chain-rule gradients with respect to
// the level set and the relaxed L2 conductivity.

#include <cmath>
#include <numbers>

#include "tscm/fem.hpp"
#include "tscm/forward.hpp"

namespace tscm {

struct RegParams {
  double alpha = 1e-5;
  double beta = 1e-5;
  double eps_heaviside = 1e-4;  // set to h^2 of the working mesh
  double eps_tv = 1e-4;         // smoothing inside the BV seminorm
  double sigma1 = 20.0;
  double sigma2 = 2.0;
  // Weight on the misfit term inside the combined objective. Runs on
  // synthetic data normalize it by the total data power so the stopping
  // tolerances act on O(1) quantities.
  double fid_weight = 1.0;
  // Project the regularizer gradient onto fields vanishing on the
  // boundary (H_0^1 style); switchable for experimentation.
  bool h0_projection = true;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0) {
      throw std::invalid_argument("reg params: negative alpha/beta");
    }
    if (!(eps_heaviside > 0.0) || !(eps_tv > 0.0)) {
      throw std::invalid_argument("reg params: eps must be positive");
    }
  }
};

// Smoothed step: (1/pi) atan(phi/eps) + 1/2, values in (0,1).
inline double heaviside_eps(double phi, double eps) {
  return std::atan(phi / eps) / std::numbers::pi + 0.5;
}

// Its derivative, eps / (pi (phi^2 + eps^2)).
inline double delta_eps(double phi, double eps) {
  return eps / (std::numbers::pi * (phi * phi + eps * eps));
}

// sigma1 * H_eps(phi) + sigma2 * (1 - H_eps(phi)), node-wise.
inline RealField sigma_pc(const RealField& phi, const RegParams& params) {
  phi.check_size();
  RealField out = RealField::zeros(*phi.mesh);
  for (int v = 0; v < phi.size(); ++v) {
    const double H = heaviside_eps(phi[v], params.eps_heaviside);
    out[v] = params.sigma1 * H + params.sigma2 * (1.0 - H);
  }
  out.check_finite("sigma_pc");
  return out;
}

// The continuation iterate: level set, relaxed conductivity, the
// homotopy parameter, and the derived combined conductivity.
struct ContinuationState {
  RealField phi;
  RealField sigma_l2;
  double lambda = 0.0;
  RealField sigma;  // lambda * sigma_pc(phi) + (1 - lambda) * sigma_l2

  void refresh(const RegParams& params) {
    if (lambda < 0.0 || lambda > 1.0) {
      throw std::invalid_argument("state: lambda outside [0, 1]");
    }
    phi.check_size();
    sigma_l2.check_size();
    const RealField pc = sigma_pc(phi, params);
    sigma = RealField(*phi.mesh,
                      lambda * pc.v + (1.0 - lambda) * sigma_l2.v);
    sigma.check_finite("combined sigma");
  }
};

namespace detail {

// Integral of sqrt(f^2 + eps) for P1 f, by the degree-2 midpoint rule
// applied to the nonlinear integrand.
inline double smoothed_l1(const Mesh& mesh, const Eigen::VectorXd& f,
                          double eps) {
  double s = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double A = mesh.triangle_area()[t];
    double acc = 0.0;
    for (int e = 0; e < 3; ++e) {
      const double mid = 0.5 * (f[tri[e]] + f[tri[(e + 1) % 3]]);
      acc += std::sqrt(mid * mid + eps);
    }
    s += A * acc / 3.0;
  }
  return s;
}

// Integral of sqrt(|grad f|^2 + eps); exact for P1 (constant gradients).
inline double smoothed_tv(const Mesh& mesh, const Eigen::VectorXd& f,
                          double eps) {
  double s = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto g = p1_gradients(mesh, t);
    const Vec2 grad = f[tri[0]] * g[0] + f[tri[1]] * g[1] + f[tri[2]] * g[2];
    s += mesh.triangle_area()[t] * std::sqrt(grad.squaredNorm() + eps);
  }
  return s;
}

// Per-triangle weights 1 / sqrt(|grad f|^2 + eps).
inline std::vector<double> tv_weights(const Mesh& mesh,
                                      const Eigen::VectorXd& f, double eps) {
  std::vector<double> w(mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto g = p1_gradients(mesh, t);
    const Vec2 grad = f[tri[0]] * g[0] + f[tri[1]] * g[1] + f[tri[2]] * g[2];
    w[t] = 1.0 / std::sqrt(grad.squaredNorm() + eps);
  }
  return w;
}

}  // namespace detail

// The relaxed-space regularizer R_W: plain squared L2 norm.
inline double reg_w_value(const Mesh& mesh, const SparseReal& mass,
                          const Eigen::VectorXd& w) {
  if (w.size() != mesh.n_nodes()) {
    throw std::invalid_argument("reg_w: field size mismatch");
  }
  return w.dot(mass * w);
}

// Continuation regularizer as logged and line-searched:
//   lambda * alpha * [ integral sqrt(sigma_pc^2 + eps) + J_eps(sigma_pc) ]
//   + (1 - lambda) * beta * |sigma_l2|_L2^2.
inline double reg_value(const ContinuationState& state, const RegParams& params,
                        const SparseReal& mass) {
  const Mesh& mesh = *state.phi.mesh;
  double r = (1.0 - state.lambda) * params.beta *
             reg_w_value(mesh, mass, state.sigma_l2.v);
  if (state.lambda > 0.0) {
    const RealField pc = sigma_pc(state.phi, params);
    r += state.lambda * params.alpha *
         (detail::smoothed_l1(mesh, pc.v, params.eps_tv) +
          detail::smoothed_tv(mesh, pc.v, params.eps_tv));
  }
  return r;
}

// Variant whose first term is the quadratic the gradient operators
// actually differentiate (the projection pairs the TV term with the
// plain L2 product of sigma_pc). Finite-difference oracles check the
// gradients against this form.
inline double reg_value_grad_consistent(const ContinuationState& state,
                                        const RegParams& params,
                                        const SparseReal& mass) {
  const Mesh& mesh = *state.phi.mesh;
  double r = (1.0 - state.lambda) * params.beta *
             reg_w_value(mesh, mass, state.sigma_l2.v);
  if (state.lambda > 0.0) {
    const RealField pc = sigma_pc(state.phi, params);
    r += state.lambda * params.alpha *
         (0.5 * pc.v.dot(mass * pc.v) +
          detail::smoothed_tv(mesh, pc.v, params.eps_tv));
  }
  return r;
}

// Riesz representer of the regularizer derivative with respect to
// sigma_pc: the nodal solution of
//   (grad, h) = lambda alpha [ (grad sigma_pc / sqrt(|grad sigma_pc|^2
//                + eps), grad h) + (sigma_pc, h) ]
// over test fields h (vanishing on the boundary by default).
inline RealField grad_reg_sigma_pc(const ContinuationState& state,
                                   const RegParams& params,
                                   const SparseReal& mass) {
  const Mesh& mesh = *state.phi.mesh;
  if (state.lambda <= 0.0) return RealField::zeros(mesh);
  const RealField pc = sigma_pc(state.phi, params);
  const auto w = detail::tv_weights(mesh, pc.v, params.eps_tv);
  const SparseReal Kw = assemble_stiffness(mesh, &w);
  const Eigen::VectorXd rhs =
      state.lambda * params.alpha * (Kw * pc.v + mass * pc.v);
  return h1_projection(mesh, mass, rhs, params.h0_projection);
}

// Level-set gradient of the full objective, node-wise chain rule:
//   lambda (sigma1 - sigma2) delta_eps(phi) grad_fid
//   + (sigma1 - sigma2) delta_eps(phi) grad_reg_sigma_pc.
inline RealField grad_phi_total(const ContinuationState& state,
                                const RegParams& params,
                                const RealField& grad_fid_sigma,
                                const SparseReal& mass) {
  const Mesh& mesh = *state.phi.mesh;
  grad_fid_sigma.check_size();
  const RealField gr = grad_reg_sigma_pc(state, params, mass);
  RealField out = RealField::zeros(mesh);
  const double ds = params.sigma1 - params.sigma2;
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    const double de = delta_eps(state.phi[v], params.eps_heaviside);
    out[v] = ds * de * (state.lambda * grad_fid_sigma[v] + gr[v]);
  }
  out.check_finite("grad_phi_total");
  return out;
}

// Dual (load-vector) form of the regularizer derivative with respect to
// sigma_pc, boundary rows zeroed to match the zero-trace test space.
inline Eigen::VectorXd grad_reg_sigma_pc_dual(const ContinuationState& state,
                                              const RegParams& params,
                                              const SparseReal& mass) {
  const Mesh& mesh = *state.phi.mesh;
  if (state.lambda <= 0.0) return Eigen::VectorXd::Zero(mesh.n_nodes());
  const RealField pc = sigma_pc(state.phi, params);
  const auto w = detail::tv_weights(mesh, pc.v, params.eps_tv);
  const SparseReal Kw = assemble_stiffness(mesh, &w);
  Eigen::VectorXd rhs =
      state.lambda * params.alpha * (Kw * pc.v + mass * pc.v);
  if (params.h0_projection) {
    for (int v = 0; v < mesh.n_nodes(); ++v) {
      if (mesh.is_boundary(v)) rhs[v] = 0.0;
    }
  }
  return rhs;
}

// Relaxed-conductivity gradient of the full objective:
//   (1 - lambda) grad_fid + 2 (1 - lambda) beta sigma_l2.
inline RealField grad_sigma_l2_total(const ContinuationState& state,
                                     const RegParams& params,
                                     const RealField& grad_fid_sigma) {
  grad_fid_sigma.check_size();
  const double c = 1.0 - state.lambda;
  RealField out(*state.phi.mesh,
                c * grad_fid_sigma.v + 2.0 * c * params.beta * state.sigma_l2.v);
  out.check_finite("grad_sigma_l2_total");
  return out;
}

struct ObjectiveValue {
  double total = 0.0;
  double fidelity = 0.0;  // fid_weight * raw misfit
  double reg = 0.0;
};

// Full objective at a state: weighted misfit plus regularizer. Runs the
// forward problem for every (omega, coil).
inline ObjectiveValue objective(const ContinuationState& state,
                                const RegParams& params, double mu_inv,
                                const MeasurementSet& ms,
                                const SparseReal& mass, int workers = 1) {
  const Mesh& mesh = *state.phi.mesh;
  ForwardSolution sol =
      impedance_map(mesh, mu_inv, state.sigma, ms.plan, workers);
  ObjectiveValue out;
  out.fidelity = params.fid_weight * fidelity(mesh, sol.traces, ms);
  out.reg = reg_value(state, params, mass);
  out.total = out.fidelity + out.reg;
  return out;
}

}  // namespace tscm
