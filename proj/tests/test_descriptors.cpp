#include "helpers.hpp"
#include "isogrow/descriptors.hpp"
#include "isogrow/geodesics.hpp"

#include <doctest.h>

#include <numbers>

using namespace isogrow;
using namespace testing;

TEST_CASE("planar interior fingerprint is near zero") {
  Surface s = grid_surface(81);
  const double R = surface_stats(s).R;
  const auto D = fingerprint(s, grid_vertex(81, 40, 40), 0.9 * R, 1.7 * R);
  for (int i = 0; i < kContours; ++i) {
    CHECK(D.valid[i]);
    CHECK(std::abs(D.entries[i]) <= 0.05);
  }
}

TEST_CASE("sphere fingerprint matches the analytic isocontour") {
  Surface s = sphere_surface(4);
  const double r = std::numbers::pi / 2;
  const auto D = fingerprint(s, 0, r - 0.9, r);
  REQUIRE(D.valid[kContours - 1]);
  CHECK(std::abs(D.entries[kContours - 1] - (std::sin(r) / r - 1.0)) <= 0.05);
  const auto radii = contour_radii(r - 0.9, r);
  for (int i = 0; i < kContours; ++i) CHECK(std::abs(D.entries[i] - (std::sin(radii[i]) / radii[i] - 1.0)) <= 0.05);
}

TEST_CASE("corner fingerprint sees a quarter circle") {
  Surface s = grid_surface(41);
  const auto D = fingerprint(s, grid_vertex(41, 0, 0), 0.1, 0.2);
  for (int i = 0; i < kContours; ++i) CHECK(std::abs(D.entries[i] + 0.75) <= 0.1);
}

TEST_CASE("radii beyond reach are flagged") {
  Surface s = grid_surface(11);
  const auto D = fingerprint(s, grid_vertex(11, 0, 0), 0.5, 3.0);
  CHECK(D.valid[0]);
  CHECK_FALSE(D.valid[kContours - 1]);
  CHECK(D.entries[kContours - 1] == -1.0);
  // Fewer than ten vertices within the radius.
  const auto tiny = fingerprint(s, grid_vertex(11, 5, 5), 0.11, 0.12);
  CHECK_FALSE(tiny.valid[0]);
}

TEST_CASE("fingerprints are invariant under rigid motion") {
  auto m = isogrow::icosphere(3);
  Surface a = Surface::from_mesh(m.vertices, m.faces);
  const auto motion = sample_rigid_motion(3);
  for (auto& v : m.vertices) v = motion * v;
  Surface b = Surface::from_mesh(m.vertices, m.faces);
  for (VertexId v : {0, 100, 400}) {
    const auto da = fingerprint(a, v, 0.3, 0.9), db = fingerprint(b, v, 0.3, 0.9);
    for (int i = 0; i < kContours; ++i) CHECK(std::abs(da.entries[i] - db.entries[i]) <= 1e-6);
  }
}

TEST_CASE("fingerprints are robust to sampling density") {
  Surface coarse = grid_surface(41), fine = grid_surface(81);
  const double rMin = 0.08, rMax = 0.16;
  for (auto [i, j] : {std::pair{20, 20}, std::pair{14, 25}}) {
    const auto a = fingerprint(coarse, grid_vertex(41, i, j), rMin, rMax);
    const auto b = fingerprint(fine, grid_vertex(81, 2 * i, 2 * j), rMin, rMax);
    for (int k = 0; k < kContours; ++k) CHECK(std::abs(a.entries[k] - b.entries[k]) <= 0.05);
  }
}

TEST_CASE("distinctiveness equals the brute-force double loop") {
  Surface s = grid_surface(11);
  std::vector<Descriptor> D(s.vertex_count());
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& d : D)
    for (int i = 0; i < kContours; ++i) {
      d.entries[i] = u(rng);
      d.valid[i] = u(rng) > -0.8;
      if (!d.valid[i]) d.entries[i] = -1.0;
    }
  // Toy: the first 20 vertices only.
  std::vector<Descriptor> toy(D.begin(), D.begin() + 20);
  std::vector<Vec3> pts(s.positions().begin(), s.positions().begin() + 20);
  Surface small = Surface::from_point_cloud(pts);
  const auto F = distinctiveness(small, toy);
  for (int a = 0; a < 20; ++a) {
    double sum = 0.0;
    for (int b = 0; b < 20; ++b) {
      double l1 = 0.0;
      for (int i = 0; i < kContours; ++i)
        if (toy[a].valid[i] && toy[b].valid[i]) l1 += std::abs(toy[a].entries[i] - toy[b].entries[i]);
      sum += l1;
    }
    CHECK(F[a] == sum);
    CHECK(F[a] >= 0.0);
  }
}

TEST_CASE("distinctiveness is permutation equivariant") {
  auto pair = generate_synthetic(SyntheticKind::plane_hill, 21);
  const auto& raw = pair.targetMesh;
  const double R = surface_stats(pair.T).R;
  std::vector<int> perm(raw.vertices.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(4));
  std::vector<Vec3> pv(raw.vertices.size());
  for (std::size_t i = 0; i < perm.size(); ++i) pv[perm[i]] = raw.vertices[i];
  auto faces = raw.faces;
  for (auto& f : faces)
    for (auto& v : f) v = perm[v];
  Surface shuffled = Surface::from_mesh(pv, faces);
  const auto Fa = distinctiveness(pair.T, compute_descriptors(pair.T, 0.9 * R, 1.7 * R));
  const auto Fb = distinctiveness(shuffled, compute_descriptors(shuffled, 0.9 * R, 1.7 * R));
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(std::abs(Fa[i] - Fb[perm[i]]) <= 1e-9 * (1.0 + Fa[i]));
}

TEST_CASE("flat interior has no features and a hill apex is one") {
  Surface plane = grid_surface(31);
  const double R = surface_stats(plane).R;
  const double rMin = 0.9 * R, rMax = 1.7 * R;
  const auto fs = detect_features(plane, compute_descriptors(plane, rMin, rMax), R);
  for (VertexId f : fs.featureVertexIds) {
    const Vec3 p = plane.position(f);
    const double margin = std::min({p.x(), p.y(), 1.0 - p.x(), 1.0 - p.y()});
    CHECK(margin <= rMax + R + 2.0 * plane.epsilon0());
  }

  auto pair = generate_synthetic(SyntheticKind::plane_hill, 51);
  const double RT = surface_stats(pair.T).R;
  const auto ft = detect_features(pair.T, compute_descriptors(pair.T, 0.9 * RT, 1.7 * RT), RT);
  const VertexId apex = grid_vertex(51, 25, 25);
  CHECK(std::find(ft.featureVertexIds.begin(), ft.featureVertexIds.end(), apex) != ft.featureVertexIds.end());
  // Every reported feature is a strict local maximum within R.
  for (VertexId f : ft.featureVertexIds) {
    const auto d = dijkstra(pair.T.geodesic_graph(), f, RT);
    for (VertexId x = 0; x < static_cast<VertexId>(pair.T.vertex_count()); ++x)
      if (x != f && d.distance[x] <= RT) CHECK(ft.distinctiveness[f] > ft.distinctiveness[x]);
  }
}
