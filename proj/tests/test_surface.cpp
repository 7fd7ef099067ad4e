#include "helpers.hpp"
#include "isogrow/geodesics.hpp"
#include "isogrow/mesh_io.hpp"

#include <doctest.h>

#include <fstream>
#include <numbers>
#include <set>

using namespace isogrow;
using namespace testing;

TEST_CASE("grid obj loads with expected sample spacing") {
  auto dir = temp_dir("grid_obj");
  auto m = plane_grid(11);
  write_obj(dir / "grid.obj", m.vertices, m.faces);
  Surface s = load_surface(dir / "grid.obj");
  CHECK(s.vertex_count() == 121);
  CHECK(s.is_mesh());
  CHECK(s.epsilon0() == doctest::Approx(0.1).epsilon(1e-9));
  for (VertexId v = 0; v < 121; ++v) {
    CHECK(std::abs(s.normal(v).norm() - 1.0) < 1e-6);
    for (VertexId w : s.adjacency()[v]) {
      const auto& back = s.adjacency()[w];
      CHECK(std::find(back.begin(), back.end(), v) != back.end());
    }
  }
}

TEST_CASE("grid point cloud knn matches brute force") {
  auto dir = temp_dir("grid_xyz");
  auto m = plane_grid(11);
  // Shuffle the point order so the file is unordered.
  std::vector<int> order(m.vertices.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937(3));
  std::vector<Vec3> pts;
  for (int i : order) pts.push_back(m.vertices[i]);
  write_xyz(dir / "grid.xyz", pts);
  Surface s = load_surface(dir / "grid.xyz");
  REQUIRE(s.vertex_count() == 121);
  CHECK_FALSE(s.is_mesh());
  for (VertexId v = 0; v < 121; ++v) {
    const Vec3 p = s.position(v);
    const bool interior = p.x() > 0.05 && p.x() < 0.95 && p.y() > 0.05 && p.y() < 0.95;
    if (!interior) continue;
    std::set<VertexId> expected;
    for (VertexId w = 0; w < 121; ++w) {
      const Vec3 d = s.position(w) - p;
      if (w != v && std::abs(d.x()) < 0.15 && std::abs(d.y()) < 0.15) expected.insert(w);
    }
    REQUIRE(expected.size() == 8);
    // Brute-force 8 nearest: the 8 grid neighbors are strictly closer than anything else.
    std::vector<std::pair<double, VertexId>> all;
    for (VertexId w = 0; w < 121; ++w)
      if (w != v) all.emplace_back((s.position(w) - p).norm(), w);
    std::sort(all.begin(), all.end());
    std::set<VertexId> brute;
    for (int k = 0; k < 8; ++k) brute.insert(all[k].second);
    CHECK(brute == expected);
    const auto& adj = s.adjacency()[v];
    for (VertexId w : expected) CHECK(std::find(adj.begin(), adj.end(), w) != adj.end());
  }
}

TEST_CASE("too few vertices is a degenerate input") {
  auto dir = temp_dir("three");
  {
    std::ofstream o(dir / "tri.obj");
    o << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
  }
  CHECK_THROWS_AS(load_surface(dir / "tri.obj"), DegenerateInputError);
}

TEST_CASE("parse errors carry line numbers") {
  auto dir = temp_dir("bad");
  {
    std::ofstream o(dir / "bad.obj");
    o << "v 0 0 0\nv 1 0 0\nv 0 1 x\n";
  }
  try {
    load_surface(dir / "bad.obj");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.line() == 3);
  }
  {
    std::ofstream o(dir / "bad.xyz");
    o << "0 0 0\n1 0 0\n0 1 0\n1 1\n";
  }
  CHECK_THROWS_AS(load_surface(dir / "bad.xyz"), FormatError);
}

TEST_CASE("ply ascii and binary round trip") {
  auto dir = temp_dir("ply");
  auto m = plane_grid(11);
  Surface ref = Surface::from_mesh(m.vertices, m.faces);
  for (bool binary : {false, true}) {
    const auto path = dir / (binary ? "b.ply" : "a.ply");
    write_ply(path, m.vertices, m.faces, ref.normals(), {}, binary);
    RawSurface raw = read_raw_surface(path, SurfaceFormat::ply);
    REQUIRE(raw.vertices.size() == m.vertices.size());
    for (std::size_t i = 0; i < raw.vertices.size(); ++i) CHECK(raw.vertices[i] == m.vertices[i]);
    CHECK(raw.faces == m.faces);
    CHECK(raw.normals.size() == raw.vertices.size());
  }
}

TEST_CASE("mls projection on a plane") {
  Surface s = grid_surface(11);
  MlsModel mls(s);
  for (VertexId v : {0, 5, 60, 120}) {
    const Projection p = mls_project(mls, s.position(v));
    CHECK((p.point - s.position(v)).norm() < 1e-6);
  }
  const Projection off = mls_project(mls, s.position(60) + 0.05 * s.normal(60));
  CHECK(std::abs(off.point.z()) <= 1e-4);
  CHECK_FALSE(off.fallback);
  CHECK_THROWS_AS(mls_project(mls, Vec3(0.5, 0.5, 50.0)), OutOfBandError);
}

TEST_CASE("mls projection on the sphere matches the analytic radius") {
  Surface s = sphere_surface(4);
  REQUIRE(s.vertex_count() == 2562);
  MlsModel mls(s);
  double worst = 0.0;
  for (VertexId v = 0; v < 2562; v += 13) {
    for (double off : {0.05, -0.05}) {
      const Projection p = mls_project(mls, s.position(v) * (1.0 + off));
      worst = std::max(worst, std::abs(p.point.norm() - 1.0));
      // Idempotence.
      const Projection q = mls_project(mls, p.point);
      CHECK((q.point - p.point).norm() <= 2.0 * mls.projectionTolerance);
    }
  }
  CHECK(worst <= 0.01);
  // Arbitrary point between vertices.
  const Vec3 mid = (s.position(0) + s.position(s.adjacency()[0][0])).normalized() * 1.05;
  CHECK(std::abs(mls_project(mls, mid).point.norm() - 1.0) <= 0.01);
}

TEST_CASE("tangent frames") {
  Surface s = grid_surface(11);
  TangentFrame f = tangent_frame(s, 60);
  CHECK(f.u == Vec3::UnitX());
  CHECK(f.v == Vec3::UnitY());
  TangentFrame g = frame_from_normal(Vec3::Zero(), Vec3::UnitX());
  CHECK((g.u - Vec3::UnitY()).norm() < 1e-12);
  Surface sph = sphere_surface(3);
  for (VertexId v = 0; v < static_cast<VertexId>(sph.vertex_count()); ++v) {
    const TangentFrame t = tangent_frame(sph, v);
    CHECK(std::abs(t.u.dot(t.v)) <= 1e-6);
    CHECK(std::abs(t.u.dot(t.n)) <= 1e-6);
    CHECK(std::abs(t.v.dot(t.n)) <= 1e-6);
    CHECK((t.u.cross(t.v) - t.n).norm() <= 1e-6);
  }
}

TEST_CASE("surface stats") {
  const auto st = surface_stats(grid_surface(11));
  CHECK(st.diameter == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  CHECK(st.R == doctest::Approx(0.05 * std::sqrt(2.0)));
  const auto sp = surface_stats(sphere_surface(4));
  CHECK(std::abs(sp.diameter - 2.0) <= 0.02);
  CHECK(std::abs(sp.R - 0.1) <= 0.001);
  const std::vector<Vec3> tri = {{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2, 0}};
  CHECK(estimate_diameter(tri) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rigid motion leaves intrinsic quantities unchanged") {
  auto m = isogrow::icosphere(3);
  Surface a = Surface::from_mesh(m.vertices, m.faces);
  const auto motion = sample_rigid_motion();
  std::vector<Vec3> moved;
  for (const auto& v : m.vertices) moved.push_back(motion * v);
  Surface b = Surface::from_mesh(moved, m.faces);
  CHECK(std::abs(a.epsilon0() - b.epsilon0()) < 1e-9);
  CHECK(std::abs(a.diameter() - b.diameter()) < 1e-9);
  CHECK(a.adjacency() == b.adjacency());
  const auto da = dijkstra(a, 0), db = dijkstra(b, 0);
  for (std::size_t i = 0; i < da.distance.size(); ++i) CHECK(std::abs(da.distance[i] - db.distance[i]) < 1e-9);
}

TEST_CASE("normal estimation on a planar cloud") {
  auto m = plane_grid(15);
  Surface s = Surface::from_point_cloud(m.vertices);
  for (VertexId v = 0; v < static_cast<VertexId>(s.vertex_count()); ++v) {
    const Vec3 p = s.position(v);
    if (p.x() < 0.01 || p.x() > 0.99 || p.y() < 0.01 || p.y() > 0.99) continue;
    const double angle = std::acos(std::min(1.0, std::abs(s.normal(v).z())));
    CHECK(angle * 180.0 / std::numbers::pi <= 1.0);
    CHECK(s.normal(v).z() > 0.0);
  }
}
