#pragma once

// 2D triangular meshes of a disk-shaped imaging domain with labeled
// boundary arcs (one arc per excitation coil), plus the piecewise
// geometric phantoms used to synthesize conductivity distributions.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tscm {

using Vec2 = Eigen::Vector2d;

struct BoundaryEdge {
  int a = 0;
  int b = 0;
  int arc = 0;
};

class Mesh {
 public:
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<BoundaryEdge> boundary_edges;
  double h = 0.0;   // max edge length over all triangles
  int n_arcs = 0;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int n_boundary() const { return static_cast<int>(boundary_loop_.size()); }

  // Boundary nodes in counterclockwise loop order.
  const std::vector<int>& boundary_loop() const { return boundary_loop_; }
  // Length of loop edge k, connecting loop node k to loop node (k+1) % B.
  const std::vector<double>& boundary_edge_length() const { return edge_len_; }
  // Arc label of loop edge k.
  const std::vector<int>& boundary_edge_arc() const { return edge_arc_; }
  // Loop position of a node, or -1 for interior nodes.
  int loop_index(int node) const { return node_to_loop_[node]; }
  bool is_boundary(int node) const { return node_to_loop_[node] >= 0; }

  const std::vector<double>& triangle_area() const { return area_; }

  double area() const {
    return std::accumulate(area_.begin(), area_.end(), 0.0);
  }
  double perimeter() const {
    return std::accumulate(edge_len_.begin(), edge_len_.end(), 0.0);
  }

  double arc_length(int arc) const {
    if (arc < 0 || arc >= n_arcs) {
      throw std::invalid_argument("mesh: unknown arc label " +
                                  std::to_string(arc));
    }
    double len = 0.0;
    for (std::size_t k = 0; k < edge_arc_.size(); ++k) {
      if (edge_arc_[k] == arc) len += edge_len_[k];
    }
    return len;
  }

  // Validates all structural invariants; called after construction or load.
  void finalize() {
    if (nodes.empty() || triangles.empty() || boundary_edges.empty()) {
      throw std::invalid_argument("mesh: empty node/triangle/boundary set");
    }
    area_.resize(triangles.size());
    h = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      const auto& tri = triangles[t];
      for (int v : tri) {
        if (v < 0 || v >= n_nodes()) {
          throw std::invalid_argument("mesh: triangle node index out of range");
        }
      }
      const Vec2 e1 = nodes[tri[1]] - nodes[tri[0]];
      const Vec2 e2 = nodes[tri[2]] - nodes[tri[0]];
      const double a2 = e1.x() * e2.y() - e1.y() * e2.x();
      if (!(a2 > 0.0)) {
        throw std::invalid_argument(
            "mesh: triangle " + std::to_string(t) +
            " has non-positive signed area");
      }
      area_[t] = 0.5 * a2;
      h = std::max({h, e1.norm(), e2.norm(), (e2 - e1).norm()});
    }
    build_loop();
    check_arcs();
  }

 private:
  std::vector<double> area_;
  std::vector<int> boundary_loop_;
  std::vector<double> edge_len_;
  std::vector<int> edge_arc_;
  std::vector<int> node_to_loop_;

  void build_loop() {
    const int B = static_cast<int>(boundary_edges.size());
    // Each boundary node must appear in exactly two boundary edges.
    std::vector<std::array<int, 2>> incident(nodes.size(), {-1, -1});
    for (int k = 0; k < B; ++k) {
      for (int v : {boundary_edges[k].a, boundary_edges[k].b}) {
        if (v < 0 || v >= n_nodes()) {
          throw std::invalid_argument("mesh: boundary edge node out of range");
        }
        auto& in = incident[v];
        if (in[0] < 0) {
          in[0] = k;
        } else if (in[1] < 0) {
          in[1] = k;
        } else {
          throw std::invalid_argument(
              "mesh: boundary node shared by more than two boundary edges");
        }
      }
    }
    // Walk the loop starting from the lowest-numbered boundary node.
    int start = -1;
    for (int v = 0; v < n_nodes(); ++v) {
      if (incident[v][0] >= 0) {
        if (incident[v][1] < 0) {
          throw std::invalid_argument("mesh: open boundary at node " +
                                      std::to_string(v));
        }
        start = v;
        break;
      }
    }
    boundary_loop_.clear();
    edge_arc_.clear();
    std::vector<char> used(B, 0);
    int node = start;
    int prev_edge = -1;
    do {
      boundary_loop_.push_back(node);
      const auto& in = incident[node];
      const int e = (in[0] != prev_edge) ? in[0] : in[1];
      if (e < 0 || used[e]) {
        throw std::invalid_argument("mesh: boundary is not a single loop");
      }
      used[e] = 1;
      edge_arc_.push_back(boundary_edges[e].arc);
      node = (boundary_edges[e].a == node) ? boundary_edges[e].b
                                           : boundary_edges[e].a;
      prev_edge = e;
    } while (node != start);
    if (static_cast<int>(boundary_loop_.size()) != B) {
      throw std::invalid_argument(
          "mesh: boundary edges do not cover the boundary exactly once");
    }
    // Orient the loop counterclockwise.
    double signed_area = 0.0;
    for (int k = 0; k < B; ++k) {
      const Vec2& p = nodes[boundary_loop_[k]];
      const Vec2& q = nodes[boundary_loop_[(k + 1) % B]];
      signed_area += p.x() * q.y() - q.x() * p.y();
    }
    if (signed_area < 0.0) {
      std::reverse(boundary_loop_.begin() + 1, boundary_loop_.end());
      std::reverse(edge_arc_.begin(), edge_arc_.end());
    }
    edge_len_.resize(B);
    for (int k = 0; k < B; ++k) {
      edge_len_[k] = (nodes[boundary_loop_[(k + 1) % B]] -
                      nodes[boundary_loop_[k]])
                         .norm();
    }
    node_to_loop_.assign(nodes.size(), -1);
    for (int k = 0; k < B; ++k) node_to_loop_[boundary_loop_[k]] = k;
  }

  void check_arcs() {
    n_arcs = 1 + *std::max_element(edge_arc_.begin(), edge_arc_.end());
    std::vector<int> count(n_arcs, 0);
    for (int a : edge_arc_) {
      if (a < 0) throw std::invalid_argument("mesh: negative arc label");
      ++count[a];
    }
    for (int a = 0; a < n_arcs; ++a) {
      if (count[a] == 0) {
        throw std::invalid_argument("mesh: empty boundary arc " +
                                    std::to_string(a));
      }
    }
    // Every arc must be one contiguous run along the loop.
    const int B = static_cast<int>(edge_arc_.size());
    int changes = 0;
    for (int k = 0; k < B; ++k) {
      if (edge_arc_[k] != edge_arc_[(k + 1) % B]) ++changes;
    }
    if (changes != (n_arcs == 1 ? 0 : n_arcs)) {
      throw std::invalid_argument("mesh: arc labels are not contiguous");
    }
  }
};

// Structured triangulation of the disk of given radius centered at the
// origin: concentric rings of nodes, ring i holding m1*i nodes, fanned
// between consecutive rings. The outer ring is split into n_arcs equal
// arcs; m1 is chosen so the boundary node count is divisible by n_arcs.
inline Mesh build_disk_mesh(double radius, double target_h, int n_arcs);

namespace meshdetail {

inline Mesh build_disk_rings(double radius, int n_rings, int m1, int n_arcs) {
  Mesh mesh;
  mesh.nodes.emplace_back(0.0, 0.0);
  std::vector<int> ring_start(n_rings + 1, 0);
  for (int i = 1; i <= n_rings; ++i) {
    ring_start[i] = mesh.n_nodes();
    const double r = radius * i / n_rings;
    const int m = m1 * i;
    for (int j = 0; j < m; ++j) {
      const double th = 2.0 * std::numbers::pi * j / m;
      mesh.nodes.emplace_back(r * std::cos(th), r * std::sin(th));
    }
  }

  // Center fan.
  for (int j = 0; j < m1; ++j) {
    mesh.triangles.push_back({0, ring_start[1] + j, ring_start[1] + (j + 1) % m1});
  }
  // Ring bands, merged by exact fractional-angle comparison so the
  // triangulation is periodic under rotation by the ring symmetry.
  for (int i = 2; i <= n_rings; ++i) {
    const int na = m1 * (i - 1), nb = m1 * i;
    const int sa = ring_start[i - 1], sb = ring_start[i];
    int ja = 0, jb = 0;
    while (ja < na || jb < nb) {
      // Compare next angles (ja+1)/na vs (jb+1)/nb in exact arithmetic;
      // ties advance the inner ring so aligned nodes get joined.
      const bool advance_outer =
          (ja == na) ||
          (jb < nb &&
           static_cast<long long>(jb + 1) * na < static_cast<long long>(ja + 1) * nb);
      if (advance_outer) {
        mesh.triangles.push_back(
            {sb + jb % nb, sb + (jb + 1) % nb, sa + ja % na});
        ++jb;
      } else {
        mesh.triangles.push_back(
            {sa + (ja + 1) % na, sa + ja % na, sb + jb % nb});
        ++ja;
      }
    }
  }

  const int B = m1 * n_rings;
  const int edges_per_arc = B / n_arcs;
  for (int j = 0; j < B; ++j) {
    mesh.boundary_edges.push_back(
        {ring_start[n_rings] + j, ring_start[n_rings] + (j + 1) % B,
         j / edges_per_arc});
  }
  mesh.finalize();
  return mesh;
}

}  // namespace meshdetail

inline Mesh build_disk_mesh(double radius, double target_h, int n_arcs) {
  if (!(radius > 0.0)) throw std::invalid_argument("disk mesh: radius <= 0");
  if (!(target_h > 0.0) || target_h >= radius) {
    throw std::invalid_argument("disk mesh: need 0 < target_h < radius");
  }
  if (n_arcs < 1) throw std::invalid_argument("disk mesh: n_arcs < 1");

  const int n_base = std::max(1, static_cast<int>(std::ceil(radius / target_h)));
  if (n_arcs > 6 * n_base) {
    throw std::invalid_argument(
        "disk mesh: target_h produces fewer boundary nodes than n_arcs");
  }
  // Diagonal edges on coarse meshes can overshoot the target slightly;
  // adding rings until h <= 1.5 * target_h always terminates since both
  // radial and tangential spacing shrink with the ring count.
  for (int n_rings = n_base;; ++n_rings) {
    // Smallest m1 >= 6 with n_arcs | m1 * n_rings.
    const int q = n_arcs / std::gcd(n_rings, n_arcs);
    const int m1 = q * ((6 + q - 1) / q);
    Mesh mesh = meshdetail::build_disk_rings(radius, n_rings, m1, n_arcs);
    if (mesh.h <= 1.5 * target_h) return mesh;
  }
}

// Geometric phantom: disjoint union of disks and annuli carrying
// conductivity sigma1 against a sigma2 background.
struct PhantomSpec {
  struct Disk {
    Vec2 center;
    double radius;
  };
  struct Annulus {
    Vec2 center;
    double r_inner;
    double r_outer;
  };
  std::vector<Disk> disks;
  std::vector<Annulus> annuli;
  double sigma1 = 20.0;
  double sigma2 = 2.0;

  bool empty() const { return disks.empty() && annuli.empty(); }

  void validate(double domain_radius) const {
    if (sigma1 == sigma2 || sigma1 <= 0.0 || sigma2 <= 0.0) {
      throw std::invalid_argument("phantom: need positive sigma1 != sigma2");
    }
    for (const auto& d : disks) {
      if (d.radius <= 0.0 || d.center.norm() + d.radius >= domain_radius) {
        throw std::invalid_argument("phantom: disk not strictly inside domain");
      }
    }
    for (const auto& a : annuli) {
      if (a.r_inner <= 0.0 || a.r_outer <= a.r_inner ||
          a.center.norm() + a.r_outer >= domain_radius) {
        throw std::invalid_argument(
            "phantom: annulus not strictly inside domain");
      }
    }
  }

  bool contains(const Vec2& x) const {
    for (const auto& d : disks) {
      if ((x - d.center).norm() <= d.radius) return true;
    }
    for (const auto& a : annuli) {
      const double r = (x - a.center).norm();
      if (r >= a.r_inner && r <= a.r_outer) return true;
    }
    return false;
  }

  // Unsigned distance from x to the union boundary.
  double boundary_distance(const Vec2& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& dk : disks) {
      d = std::min(d, std::abs((x - dk.center).norm() - dk.radius));
    }
    for (const auto& a : annuli) {
      const double r = (x - a.center).norm();
      d = std::min({d, std::abs(r - a.r_inner), std::abs(r - a.r_outer)});
    }
    return d;
  }
};

// Node-wise exact conductivity of the phantom: sigma1 inside any
// inclusion, sigma2 elsewhere (an annulus hole is background).
inline Eigen::VectorXd indicator_field(const Mesh& mesh,
                                       const PhantomSpec& phantom) {
  Eigen::VectorXd f(mesh.n_nodes());
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    f[v] = phantom.contains(mesh.nodes[v]) ? phantom.sigma1 : phantom.sigma2;
  }
  return f;
}

// Node-wise signed distance to the union boundary: positive inside the
// inclusion set, negative outside. An empty phantom has no interface;
// by convention the field is the constant -domain_radius.
inline Eigen::VectorXd signed_distance_field(const Mesh& mesh,
                                             const PhantomSpec& phantom,
                                             double domain_radius = 1.0) {
  Eigen::VectorXd f(mesh.n_nodes());
  if (phantom.empty()) {
    f.setConstant(-domain_radius);
    return f;
  }
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    const Vec2& x = mesh.nodes[v];
    const double d = phantom.boundary_distance(x);
    f[v] = phantom.contains(x) ? d : -d;
  }
  return f;
}

}  // namespace tscm
