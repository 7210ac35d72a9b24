#pragma once

// Canonical experiment presets: phantoms, excitation plans, penalty and
// optimizer parameters for the stock reconstruction studies.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tscm/optimizer.hpp"

namespace tscm {

struct ExperimentPreset {
  std::string name;

  // mesh
  double radius = 1.0;
  double target_h = 0.05;
  int n_arcs = 28;
  int data_refine = 2;  // 1 disables the finer data-generation mesh

  // phantom + optional initial guess for the level-set baseline
  PhantomSpec phantom;
  PhantomSpec initial_guess;
  bool has_initial_guess = false;

  // excitation plan
  int n_omegas = 4;
  double amplitude = 1.0;
  std::string mu_mode = "scaled";  // "scaled" or "physical"

  // penalties
  RegParams reg;
  bool eps_auto = true;  // eps_heaviside = eps_tv = h^2 of the built mesh
  bool normalize_fidelity = true;

  TscmConfig tscm;
  std::vector<int> lambda_stage_ladder{1, 2, 4, 8, 16};

  // noise
  double rho = 0.01;
  std::vector<double> noise_ladder{0.01, 0.05, 0.10, 0.20};
  std::uint64_t seed = 1;

  Mesh make_mesh() const { return build_disk_mesh(radius, target_h, n_arcs); }

  Mesh make_data_mesh() const {
    if (data_refine <= 1) return make_mesh();
    return build_disk_mesh(radius, target_h / data_refine, n_arcs);
  }

  ExcitationPlan make_plan() const {
    return ExcitationPlan::preset(n_omegas, n_arcs);
  }

  // Base angular frequency of the preset plan.
  static double omega0() { return 2.0 * std::numbers::pi * 32768.0; }

  double resolved_mu_inv() const {
    if (mu_mode == "physical") {
      return 1.0 / (4.0 * std::numbers::pi * 1e-7);
    }
    if (mu_mode == "scaled") {
      // Nondimensional permeability: mu_inv ten times the largest
      // reactive coefficient at the base frequency, so the magnetic term
      // dominates as the physics requires.
      return 10.0 * omega0() * std::max(phantom.sigma1, phantom.sigma2);
    }
    throw std::invalid_argument("preset: unknown mu_mode " + mu_mode);
  }

  // Penalty parameters with the mesh-dependent smoothing resolved.
  RegParams resolved_reg(const Mesh& mesh) const {
    RegParams r = reg;
    r.sigma1 = phantom.sigma1;
    r.sigma2 = phantom.sigma2;
    if (eps_auto) {
      r.eps_heaviside = mesh.h * mesh.h;
      r.eps_tv = mesh.h * mesh.h;
    }
    return r;
  }

  void validate() const {
    phantom.validate(radius);
    if (has_initial_guess) initial_guess.validate(radius);
    if (n_omegas < 1) throw std::invalid_argument("preset: n_omegas < 1");
    if (data_refine < 1) throw std::invalid_argument("preset: data_refine < 1");
    resolved_mu_inv();
    tscm.validate();
  }
};

// Stock phantom of the three-inclusion experiment: two larger disks up
// left and right, one smaller disk low center.
inline PhantomSpec three_disk_phantom() {
  PhantomSpec p;
  p.disks.push_back({Vec2(-0.40, 0.30), 0.28});
  p.disks.push_back({Vec2(0.42, 0.28), 0.25});
  p.disks.push_back({Vec2(0.05, -0.45), 0.15});
  p.sigma1 = 20.0;
  p.sigma2 = 2.0;
  return p;
}

// Disk touching an annulus, the harder two-component topology.
inline PhantomSpec disk_torus_phantom() {
  PhantomSpec p;
  p.annuli.push_back({Vec2(-0.35, 0.0), 0.15, 0.32});
  p.disks.push_back({Vec2(0.32, 0.0), 0.35});
  p.sigma1 = 20.0;
  p.sigma2 = 2.0;
  return p;
}

inline ExperimentPreset preset(const std::string& name) {
  ExperimentPreset p;
  p.name = name;
  if (name == "exp1-3disks") {
    p.phantom = three_disk_phantom();
    p.n_omegas = 4;
    p.rho = 0.01;
  } else if (name == "exp2-torus") {
    p.phantom = disk_torus_phantom();
    p.n_omegas = 4;
    p.rho = 0.01;
  } else if (name == "lsm-baseline") {
    p.phantom = three_disk_phantom();
    p.n_omegas = 1;
    p.rho = 0.0;
    p.has_initial_guess = true;
    p.initial_guess.disks.push_back({Vec2(0.0, 0.0), 0.5});
    p.initial_guess.sigma1 = p.phantom.sigma1;
    p.initial_guess.sigma2 = p.phantom.sigma2;
  } else if (name == "dlambda-study") {
    p.phantom = three_disk_phantom();
    p.n_omegas = 2;
    p.rho = 0.01;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  p.validate();
  return p;
}

}  // namespace tscm
