#pragma once

// The continuation optimizer: an outer sweep of the homotopy parameter
// from 0 to 1, an inner steepest-descent loop with doubling/halving step
// control, and the single-stage level-set baseline.

#include <chrono>
#include <string>
#include <utility>
#include <vector>

#include "tscm/reg.hpp"

namespace tscm {

struct TscmConfig {
  double delta_lambda = 0.1;
  // 0: derive the schedule from delta_lambda. 1: only the relaxed
  // (lambda = 0) stage. k >= 2: k stages, evenly spaced, ending at 1.
  int n_lambda_stages = 0;
  double tau1 = 1e-5;  // gradient-norm tolerance
  double tau2 = 1e-6;  // step-size tolerance
  double delta1 = 1.0;   // initial level set is the constant -delta1
  double delta2 = 0.01;  // initial relaxed conductivity
  double s_init = 2.0;
  int max_inner_iters = 500;
  int k_max_halvings = 40;

  void validate() const {
    if (n_lambda_stages == 0 &&
        (!(delta_lambda > 0.0) || delta_lambda > 1.0)) {
      throw std::invalid_argument("config: delta_lambda outside (0, 1]");
    }
    if (n_lambda_stages < 0) {
      throw std::invalid_argument("config: negative stage count");
    }
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) {
      throw std::invalid_argument("config: tolerances must be positive");
    }
    if (!(delta1 > 0.0) || !(delta2 > 0.0)) {
      throw std::invalid_argument("config: init constants must be positive");
    }
    if (!(s_init > 0.0) || max_inner_iters < 1 || k_max_halvings < 1) {
      throw std::invalid_argument("config: bad step/cap settings");
    }
  }
};

// Stage values {0, dl, 2 dl, ...} with the final stage clamped to 1.
inline std::vector<double> make_lambda_schedule(const TscmConfig& cfg) {
  cfg.validate();
  if (cfg.n_lambda_stages == 1) return {0.0};
  const double dl = (cfg.n_lambda_stages >= 2)
                        ? 1.0 / (cfg.n_lambda_stages - 1)
                        : cfg.delta_lambda;
  std::vector<double> s;
  for (int i = 0; i * dl < 1.0 - 1e-12; ++i) s.push_back(i * dl);
  s.push_back(1.0);
  return s;
}

struct IterRecord {
  int n = 0;
  double lambda = 0.0;
  double fidelity = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double gnorm2_sl2 = 0.0;
  double gnorm2_phi = 0.0;
  double step = 0.0;
  double seconds = 0.0;
};

struct StageRecord {
  double lambda = 0.0;
  int iters = 0;
  std::string reason;  // grad_tol | step_tol | no_descent | iter_cap
};

struct RunLog {
  std::vector<IterRecord> iters;
  std::vector<StageRecord> stages;
  double fid_weight = 1.0;
  double final_rel_error = std::numeric_limits<double>::quiet_NaN();
};

// Relative L2 reconstruction error: |result - exact| / |exact| in the
// mass-weighted norm.
inline double relative_error(const SparseReal& mass, const RealField& result,
                             const RealField& exact) {
  result.check_size();
  exact.check_size();
  const Eigen::VectorXd d = result.v - exact.v;
  const double denom = exact.v.dot(mass * exact.v);
  if (!(denom > 0.0)) {
    throw std::invalid_argument("relative_error: zero-norm exact field");
  }
  return std::sqrt(d.dot(mass * d) / denom);
}

// Bundles the fixed data of one inversion run: mesh, physics, penalty
// parameters, measurements, and cached mass factorization. Shared
// read-only by the single optimizer thread and its forward workers.
class Problem {
 public:
  Problem(const Mesh& mesh, double mu_inv, RegParams params, MeasurementSet ms,
          int workers = 1)
      : mesh_(&mesh),
        mu_inv_(mu_inv),
        params_(params),
        ms_(std::move(ms)),
        workers_(workers),
        mass_(assemble_mass(mesh)) {
    params_.validate();
    ms_.validate();
    if (ms_.n_boundary != mesh.n_boundary()) {
      throw std::invalid_argument("problem: measurements not on this mesh");
    }
    mass_ldlt_.compute(mass_);
    if (mass_ldlt_.info() != Eigen::Success) {
      throw SolverError("mass factorization failed", std::nan(""));
    }
  }

  const Mesh& mesh() const { return *mesh_; }
  double mu_inv() const { return mu_inv_; }
  const RegParams& params() const { return params_; }
  const MeasurementSet& measurements() const { return ms_; }
  const SparseReal& mass() const { return mass_; }
  int workers() const { return workers_; }

  void set_exact_sigma(RealField exact) { exact_ = std::move(exact); }
  bool has_exact() const { return exact_.mesh != nullptr; }
  const RealField& exact_sigma() const { return exact_; }

  double l2_norm_sq(const Eigen::VectorXd& f) const { return f.dot(mass_ * f); }

  ObjectiveValue evaluate(const ContinuationState& state) const {
    return objective(state, params_, mu_inv_, ms_, mass_, workers_);
  }

  struct Gradients {
    RealField phi;
    RealField sl2;
    double g2_phi = 0.0;
    double g2_sl2 = 0.0;
    ObjectiveValue obj;
  };

  // One fused pass: forward and adjoint solves for every (omega, coil)
  // sharing a factorization per omega, then the misfit dual, its mass
  // projection, and the chain-rule gradients. Case-indexed storage keeps
  // the reduction order fixed for any worker count.
  Gradients gradients(const ContinuationState& state) const {
    const Mesh& mesh = *mesh_;
    const ExcitationPlan& plan = ms_.plan;
    const int n_cases = plan.n_cases();
    std::vector<Eigen::VectorXcd> fields(n_cases), adjoints(n_cases);
    std::vector<double> fid_case(n_cases, 0.0);
    detail::parallel_over_omegas(plan.n_omegas(), workers_, [&](int k) {
      SparseSystem sys = assemble_system(mesh, mu_inv_, plan.omegas[k],
                                         state.sigma);
      FactorizedSystem fact(sys);
      for (int c = 0; c < plan.n_coils(); ++c) {
        const int cs = plan.index(k, c);
        sys.rhs.setZero();
        apply_neumann_rhs(sys, plan.coils[c], plan.amplitudes[c]);
        Eigen::VectorXcd A = fact.solve(sys.rhs);
        Eigen::VectorXcd r(mesh.n_boundary());
        for (int i = 0; i < mesh.n_boundary(); ++i) {
          r[i] = A[mesh.boundary_loop()[i]];
        }
        r -= ms_.m[cs];
        fid_case[cs] = boundary_l2_norm_sq(mesh, r);
        adjoints[cs] = adjoint_solve(fact, r);
        fields[cs] = std::move(A);
      }
    });
    double fid_raw = 0.0;
    for (int cs = 0; cs < n_cases; ++cs) fid_raw += fid_case[cs];

    Eigen::VectorXd dual =
        grad_fidelity_sigma_dual(mesh, fields, adjoints, plan.omegas);
    dual *= params_.fid_weight;
    RealField grad_fid(mesh, mass_ldlt_.solve(dual));
    grad_fid.check_finite("misfit gradient");

    Gradients out;
    // The level-set chain rule is applied to the dual vectors and
    // projected once, which keeps the direction an exact gradient of the
    // discrete objective even where delta_eps varies sharply across the
    // interface. For constant level sets this coincides with chaining
    // the projected fields node-wise.
    Eigen::VectorXd q = grad_reg_sigma_pc_dual(state, params_, mass_);
    q += state.lambda * dual;
    const double ds = params_.sigma1 - params_.sigma2;
    for (int v = 0; v < mesh.n_nodes(); ++v) {
      q[v] *= ds * delta_eps(state.phi[v], params_.eps_heaviside);
    }
    out.phi = RealField(mesh, mass_ldlt_.solve(q));
    out.phi.check_finite("level-set gradient");
    out.sl2 = grad_sigma_l2_total(state, params_, grad_fid);
    out.g2_phi = l2_norm_sq(out.phi.v);
    out.g2_sl2 = l2_norm_sq(out.sl2.v);
    out.obj.fidelity = params_.fid_weight * fid_raw;
    out.obj.reg = reg_value(state, params_, mass_);
    out.obj.total = out.obj.fidelity + out.obj.reg;
    return out;
  }

 private:
  const Mesh* mesh_;
  double mu_inv_;
  RegParams params_;
  MeasurementSet ms_;
  int workers_;
  SparseReal mass_;
  Eigen::SimplicialLDLT<SparseReal> mass_ldlt_;
  RealField exact_;
};

// The whole domain starts as a weak phase: constant level set -delta1
// (no inclusion) and constant relaxed conductivity delta2.
inline ContinuationState initialize(const Mesh& mesh, const TscmConfig& cfg,
                                    const RegParams& params) {
  cfg.validate();
  ContinuationState state;
  state.phi = RealField::constant(mesh, -cfg.delta1);
  state.sigma_l2 = RealField::constant(mesh, cfg.delta2);
  state.lambda = 0.0;
  state.refresh(params);
  return state;
}

struct LineSearchResult {
  double step = 0.0;
  ObjectiveValue obj;
  bool accepted = false;
  ContinuationState state;
};

// Trial step doubles after a successful previous step, then halves until
// the objective strictly decreases. Trials driving the conductivity out
// of the positive cone count as non-descent. Exhausting the halving
// budget is the normal "no longer a descent direction" termination.
inline LineSearchResult line_search(const Problem& pb,
                                    const ContinuationState& state,
                                    const RealField& dir_phi,
                                    const RealField& dir_sl2, double s_prev,
                                    bool prev_accepted, double current_total,
                                    const TscmConfig& cfg) {
  double s = prev_accepted ? 2.0 * s_prev : s_prev;
  LineSearchResult res;
  for (int k = 0; k <= cfg.k_max_halvings; ++k, s *= 0.5) {
    ContinuationState trial;
    trial.phi = RealField(pb.mesh(), state.phi.v + s * dir_phi.v);
    trial.sigma_l2 = RealField(pb.mesh(), state.sigma_l2.v + s * dir_sl2.v);
    trial.lambda = state.lambda;
    trial.refresh(pb.params());
    if (trial.sigma.v.minCoeff() <= 0.0) continue;
    const ObjectiveValue obj = pb.evaluate(trial);
    if (obj.total < current_total) {
      res.step = s;
      res.obj = obj;
      res.accepted = true;
      res.state = std::move(trial);
      return res;
    }
  }
  res.step = s;
  return res;
}

// Steepest descent at fixed lambda. Stops at the gradient tolerance, at
// the step tolerance, when no descent step exists, or at the safety cap.
inline StageRecord inner_descent(const Problem& pb, ContinuationState& state,
                                 const TscmConfig& cfg, RunLog& log,
                                 int& n_total) {
  StageRecord stage;
  stage.lambda = state.lambda;
  double s_prev = cfg.s_init;
  bool prev_ok = false;
  while (true) {
    if (stage.iters >= cfg.max_inner_iters) {
      stage.reason = "iter_cap";
      break;
    }
    if (s_prev <= cfg.tau2) {
      stage.reason = "step_tol";
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Problem::Gradients gr = pb.gradients(state);
    if (gr.g2_phi + gr.g2_sl2 <= cfg.tau1 * cfg.tau1) {
      stage.reason = "grad_tol";
      break;
    }
    const RealField dir_phi(pb.mesh(), -gr.phi.v);
    const RealField dir_sl2(pb.mesh(), -gr.sl2.v);
    LineSearchResult ls = line_search(pb, state, dir_phi, dir_sl2, s_prev,
                                      prev_ok, gr.obj.total, cfg);
    if (!ls.accepted) {
      stage.reason = "no_descent";
      break;
    }
    state = std::move(ls.state);
    s_prev = ls.step;
    prev_ok = true;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    log.iters.push_back({n_total, state.lambda, ls.obj.fidelity, ls.obj.reg,
                         ls.obj.total, gr.g2_sl2, gr.g2_phi, ls.step, secs});
    ++n_total;
    ++stage.iters;
  }
  return stage;
}

struct RunResult {
  ContinuationState state;
  RunLog log;
};

// Carries the partial log and last iterate out of an aborted run so the
// caller can persist them.
class RunAbort : public std::runtime_error {
 public:
  RunAbort(const std::string& what, RunResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const RunResult& partial() const { return partial_; }

 private:
  RunResult partial_;
};

namespace detail {

inline void finish_log(const Problem& pb, RunResult& res) {
  res.log.fid_weight = pb.params().fid_weight;
  if (pb.has_exact()) {
    res.log.final_rel_error =
        relative_error(pb.mass(), res.state.sigma, pb.exact_sigma());
  }
}

}  // namespace detail

// The continuation run: stages at {0, dl, ..., 1}, each a fresh inner
// descent with the step size reset, the state carried over.
inline RunResult run_tscm(const Problem& pb, const TscmConfig& cfg) {
  RunResult res;
  res.state = initialize(pb.mesh(), cfg, pb.params());
  int n = 0;
  for (const double lam : make_lambda_schedule(cfg)) {
    res.state.lambda = lam;
    res.state.refresh(pb.params());
    try {
      res.log.stages.push_back(inner_descent(pb, res.state, cfg, res.log, n));
    } catch (const SolverError& e) {
      detail::finish_log(pb, res);
      throw RunAbort(std::string("run aborted: ") + e.what(), std::move(res));
    }
  }
  detail::finish_log(pb, res);
  return res;
}

// Single level-set stage (lambda pinned at 1) from a given state; the
// relaxed conductivity carries zero weight and stays frozen.
inline RunResult run_lsm_from_state(const Problem& pb, const TscmConfig& cfg,
                                    ContinuationState state) {
  cfg.validate();
  RunResult res;
  res.state = std::move(state);
  res.state.lambda = 1.0;
  res.state.refresh(pb.params());
  int n = 0;
  try {
    res.log.stages.push_back(inner_descent(pb, res.state, cfg, res.log, n));
  } catch (const SolverError& e) {
    detail::finish_log(pb, res);
    throw RunAbort(std::string("baseline aborted: ") + e.what(),
                   std::move(res));
  }
  detail::finish_log(pb, res);
  return res;
}

// Standard level-set baseline: the topology comes from an a-priori
// initial guess whose signed distance seeds the level set.
inline RunResult run_lsm_baseline(const Problem& pb, const TscmConfig& cfg,
                                  const PhantomSpec& initial_guess) {
  ContinuationState state;
  state.phi = RealField(pb.mesh(), signed_distance_field(pb.mesh(), initial_guess));
  state.sigma_l2 = RealField::constant(pb.mesh(), cfg.delta2);
  state.lambda = 1.0;
  state.refresh(pb.params());
  return run_lsm_from_state(pb, cfg, std::move(state));
}

}  // namespace tscm
