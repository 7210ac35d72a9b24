#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "support/test_helpers.hpp"
#include "tscm/io.hpp"

using namespace tscm;
namespace fs = std::filesystem;

namespace {

double recompute_h(const Mesh& mesh) {
  double h = 0.0;
  for (const auto& tri : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      h = std::max(h,
                   (mesh.nodes[tri[e]] - mesh.nodes[tri[(e + 1) % 3]]).norm());
    }
  }
  return h;
}

fs::path temp_file(const char* name) {
  auto dir = fs::temp_directory_path() / "tscm_mesh_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("disk mesh satisfies its structural contract", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.5, 4);
  CHECK(mesh.n_arcs == 4);
  CHECK(mesh.h <= 1.5 * 0.5);
  CHECK(mesh.h == Catch::Approx(recompute_h(mesh)).epsilon(0));
  for (double a : mesh.triangle_area()) CHECK(a > 0.0);
  CHECK(static_cast<int>(mesh.boundary_edges.size()) == mesh.n_boundary());

  // Equal arcs within one boundary-edge length.
  const double expected = mesh.perimeter() / 4.0;
  const double max_edge = *std::max_element(mesh.boundary_edge_length().begin(),
                                            mesh.boundary_edge_length().end());
  for (int a = 0; a < 4; ++a) {
    CHECK(std::abs(mesh.arc_length(a) - expected) <= max_edge);
  }
}

TEST_CASE("disk mesh area converges at second order", "[mesh]") {
  const double pi = std::numbers::pi;
  double prev_err = 0.0;
  int level = 0;
  for (double th : {0.2, 0.1, 0.05}) {
    const Mesh mesh = build_disk_mesh(1.0, th, 4);
    const double err = pi - mesh.area();
    CHECK(err > 0.0);  // inscribed polygon
    if (level > 0) {
      const double ratio = prev_err / err;
      CHECK(ratio > 3.0);
      CHECK(ratio < 5.0);
    }
    prev_err = err;
    ++level;
  }
}

TEST_CASE("disk mesh builds the 28-coil boundary", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.05, 28);
  CHECK(mesh.n_arcs == 28);
  CHECK(mesh.n_boundary() % 28 == 0);
  const double expected = mesh.perimeter() / 28.0;
  for (int a = 0; a < 28; ++a) {
    CHECK(mesh.arc_length(a) == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("disk mesh rejects more arcs than boundary nodes", "[mesh]") {
  CHECK_THROWS_AS(build_disk_mesh(1.0, 0.5, 28), std::invalid_argument);
  CHECK_THROWS_AS(build_disk_mesh(1.0, 0.9, 100), std::invalid_argument);
}

TEST_CASE("boundary loop is a single closed counterclockwise walk", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.3, 7);
  const auto& loop = mesh.boundary_loop();
  REQUIRE(static_cast<int>(loop.size()) == mesh.n_boundary());
  double signed_area = 0.0;
  for (std::size_t k = 0; k < loop.size(); ++k) {
    const Vec2& p = mesh.nodes[loop[k]];
    const Vec2& q = mesh.nodes[loop[(k + 1) % loop.size()]];
    signed_area += 0.5 * (p.x() * q.y() - q.x() * p.y());
  }
  CHECK(signed_area > 0.0);
  for (std::size_t k = 0; k < loop.size(); ++k) {
    CHECK(mesh.loop_index(loop[k]) == static_cast<int>(k));
  }
}

TEST_CASE("indicator field of trivial phantoms", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.2, 4);
  PhantomSpec empty;
  empty.sigma1 = 20.0;
  empty.sigma2 = 2.0;
  const Eigen::VectorXd f = indicator_field(mesh, empty);
  CHECK(f.minCoeff() == 2.0);
  CHECK(f.maxCoeff() == 2.0);

  PhantomSpec whole;  // covers the whole domain (no validation needed here)
  whole.disks.push_back({Vec2(0.0, 0.0), 2.0});
  const Eigen::VectorXd g = indicator_field(mesh, whole);
  CHECK(g.minCoeff() == 20.0);
  CHECK(g.maxCoeff() == 20.0);
}

TEST_CASE("three-disk indicator integrates to the inclusion area", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.05, 4);
  const PhantomSpec ph = three_disk_phantom();
  const Eigen::VectorXd f = indicator_field(mesh, ph);
  const SparseReal M = assemble_mass(mesh);
  const Eigen::VectorXd ind =
      (f.array() - ph.sigma2).matrix() / (ph.sigma1 - ph.sigma2);
  const double measured = Eigen::VectorXd::Ones(mesh.n_nodes()).dot(M * ind);
  double exact = 0.0;
  for (const auto& d : ph.disks) exact += std::numbers::pi * d.radius * d.radius;
  // Nodal indicators smear the interface over one element band.
  CHECK(std::abs(measured - exact) < 3.0 * mesh.h);
}

TEST_CASE("signed distance of a single disk is analytic", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.1, 4);
  PhantomSpec ph;
  ph.disks.push_back({Vec2(0.2, 0.1), 0.3});
  const RealField phi(mesh, signed_distance_field(mesh, ph));
  for (int k = 0; k < mesh.n_boundary(); ++k) {
    const int v = mesh.boundary_loop()[k];
    const double d = (mesh.nodes[v] - Vec2(0.2, 0.1)).norm() - 0.3;
    CHECK(phi[v] == Catch::Approx(-d).margin(1e-14));
  }
  // Interior of the inclusion: positive, peaking near the center value r.
  CHECK(testing::eval_p1(phi, Vec2(0.2, 0.1)) ==
        Catch::Approx(0.3).margin(mesh.h));
}

TEST_CASE("signed distance of an empty phantom is constant", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.3, 4);
  PhantomSpec ph;
  const Eigen::VectorXd phi = signed_distance_field(mesh, ph, 1.0);
  CHECK(phi.minCoeff() == -1.0);
  CHECK(phi.maxCoeff() == -1.0);
}

TEST_CASE("two-disk zero level set tracks both circles", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.05, 4);
  PhantomSpec ph;
  ph.disks.push_back({Vec2(-0.4, 0.2), 0.25});
  ph.disks.push_back({Vec2(0.45, -0.3), 0.2});
  const RealField phi(mesh, signed_distance_field(mesh, ph));
  for (const auto& d : ph.disks) {
    for (int i = 0; i < 64; ++i) {
      const double th = 2.0 * std::numbers::pi * i / 64;
      const Vec2 p = d.center + d.radius * Vec2(std::cos(th), std::sin(th));
      CHECK(std::abs(testing::eval_p1(phi, p)) <= mesh.h);
    }
  }
}

TEST_CASE("signed distance gradient is near unit away from kinks", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.05, 4);
  PhantomSpec ph;
  ph.disks.push_back({Vec2(0.1, 0.0), 0.35});
  const Eigen::VectorXd phi = signed_distance_field(mesh, ph);
  double num = 0.0, den = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 c =
        (mesh.nodes[tri[0]] + mesh.nodes[tri[1]] + mesh.nodes[tri[2]]) / 3.0;
    const double to_interface = std::abs((c - Vec2(0.1, 0.0)).norm() - 0.35);
    const double to_center = (c - Vec2(0.1, 0.0)).norm();
    if (to_interface < 2.0 * mesh.h || to_center < 2.0 * mesh.h) continue;
    const auto g = tscm::detail::p1_gradients(mesh, t);
    const Vec2 grad =
        phi[tri[0]] * g[0] + phi[tri[1]] * g[1] + phi[tri[2]] * g[2];
    const double dev = grad.norm() - 1.0;
    num += mesh.triangle_area()[t] * dev * dev;
    den += mesh.triangle_area()[t];
  }
  REQUIRE(den > 0.0);
  CHECK(std::sqrt(num / den) <= 0.15);
}

TEST_CASE("mesh file round trip is byte identical", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.3, 7);
  const auto p1 = temp_file("mesh_a.txt");
  const auto p2 = temp_file("mesh_b.txt");
  save_mesh(p1.string(), mesh);
  const Mesh loaded = load_mesh(p1.string());
  save_mesh(p2.string(), loaded);
  std::ifstream f1(p1), f2(p2);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(loaded.h == mesh.h);
  CHECK(loaded.n_arcs == mesh.n_arcs);
  CHECK(loaded.area() == Catch::Approx(mesh.area()).epsilon(0));
}

TEST_CASE("truncated mesh file fails with a position", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.3, 4);
  const auto p1 = temp_file("mesh_trunc.txt");
  save_mesh(p1.string(), mesh);
  std::ifstream in(p1);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  in.close();
  std::ofstream out(p1);
  out << all.substr(0, all.size() / 2);
  out.close();
  CHECK_THROWS_WITH(load_mesh(p1.string()),
                    Catch::Matchers::ContainsSubstring("unexpected end") ||
                        Catch::Matchers::ContainsSubstring("bad"));
}

TEST_CASE("annulus phantom keeps its hole at background", "[mesh]") {
  const Mesh mesh = build_disk_mesh(1.0, 0.05, 4);
  PhantomSpec ph;
  ph.annuli.push_back({Vec2(0.0, 0.0), 0.2, 0.5});
  const Eigen::VectorXd f = indicator_field(mesh, ph);
  CHECK(f[0] == 2.0);  // center node sits in the hole
  // A node in the ring body.
  int v_ring = -1;
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    const double r = mesh.nodes[v].norm();
    if (r > 0.3 && r < 0.4) {
      v_ring = v;
      break;
    }
  }
  REQUIRE(v_ring >= 0);
  CHECK(f[v_ring] == 20.0);
}

TEST_CASE("phantom validation rejects bad shapes", "[mesh]") {
  PhantomSpec ph;
  ph.disks.push_back({Vec2(0.9, 0.0), 0.3});
  CHECK_THROWS_AS(ph.validate(1.0), std::invalid_argument);
  PhantomSpec same;
  same.sigma1 = same.sigma2 = 5.0;
  CHECK_THROWS_AS(same.validate(1.0), std::invalid_argument);
}
