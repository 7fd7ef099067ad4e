#include "helpers.hpp"

#include "isogrow/growing.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace isogrow;
using testing::grid_surface;
using testing::grid_vertex;
using testing::sphere_surface;

namespace {

double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

// Great-circle arc from a to b on the unit sphere, sampled finely.
void append_arc(std::vector<Vec3>& pts, const Vec3& a, const Vec3& b, int pieces) {
  const double theta = angle_between(a, b);
  for (int k = pts.empty() ? 0 : 1; k <= pieces; ++k) {
    const double t = theta * k / pieces;
    pts.push_back((std::sin(theta - t) * a + std::sin(t) * b) / std::sin(theta));
  }
}

GeodesicPath make_path(std::vector<Vec3> pts) {
  GeodesicPath p;
  p.length = polyline_length(pts);
  p.points = std::move(pts);
  return p;
}

struct PlaneFixture {
  explicit PlaneFixture(int n) : S(grid_surface(n)), T(grid_surface(n)), mlsS(S), mlsT(T), hier(build_hierarchy(S)) {}
  Surface S, T;
  MlsModel mlsS, mlsT;
  TopologyHierarchy hier;
};

OrientedPointMatch identity_seed(const Surface& S, VertexId v) {
  OrientedPointMatch m;
  m.s = S.position(v);
  m.t = S.position(v);
  m.ds = Vec3::UnitX();
  m.dt = Vec3::UnitX();
  return m;
}

double max_identity_error(const PartialMap& map, const Surface& S) {
  double e = 0.0;
  for (VertexId v : map.domain()) e = std::max(e, (map.image(v) - S.position(v)).norm());
  return e;
}

}  // namespace

TEST_CASE("planar transport keeps the direction") {
  const Surface S = grid_surface(21);
  const MlsModel mls(S);
  const auto path = make_path({Vec3(0.2, 0.3, 0), Vec3(0.5, 0.45, 0), Vec3(0.8, 0.7, 0)});
  const Vec3 d = parallel_transport(S, mls, path, Vec3::UnitX());
  CHECK(angle_between(d, Vec3::UnitX()) <= std::numbers::pi / 180.0);
  CHECK(d.norm() == doctest::Approx(1.0));
}

TEST_CASE("holonomy of a spherical right triangle") {
  const Surface S = sphere_surface(4);
  const MlsModel mls(S);
  std::vector<Vec3> pts;
  const Vec3 a(0, 0, 1), b(1, 0, 0), c(0, 1, 0);
  append_arc(pts, a, b, 400);
  append_arc(pts, b, c, 400);
  append_arc(pts, c, a, 400);
  const Vec3 start = Vec3(1, 0.3, 0).normalized();
  const Vec3 end = parallel_transport(S, mls, make_path(pts), start);
  const Vec3 n = mls_project(mls, a).normal;
  const Vec3 s0 = (start - start.dot(n) * n).normalized();
  CHECK(std::abs(angle_between(s0, end) - std::numbers::pi / 2) <= 0.1 * std::numbers::pi / 2);
}

TEST_CASE("transport along a path and back returns the direction") {
  const Surface S = sphere_surface(4);
  const MlsModel mls(S);
  std::vector<Vec3> pts;
  append_arc(pts, Vec3(0, 0, 1), Vec3(1, 1, 0.5).normalized(), 300);
  const auto fwd = make_path(pts);
  auto rev = fwd;
  std::reverse(rev.points.begin(), rev.points.end());
  const Vec3 d0 = Vec3(0.3, 1, 0).normalized();
  const Vec3 back = parallel_transport(S, mls, rev, parallel_transport(S, mls, fwd, d0));
  CHECK(angle_between(back, d0) <= 2.0 * std::numbers::pi / 180.0);
}

TEST_CASE("transport fails on an empty path") {
  const Surface S = grid_surface(5);
  const MlsModel mls(S);
  CHECK_THROWS_AS(parallel_transport(S, mls, GeodesicPath{}, Vec3::UnitX()), PreconditionError);
}

TEST_CASE("surface walk on a plane") {
  const Surface S = grid_surface(21);
  const MlsModel mls(S);
  const auto w = walk_on_surface(mls, Vec3(0.2, 0.2, 0), Vec3(1, 1, 0), 0.3, Vec3::UnitX(), 0.01);
  CHECK((w.point - Vec3(0.2, 0.2, 0) - 0.3 * Vec3(1, 1, 0).normalized()).norm() < 1e-9);
  CHECK(angle_between(w.carried, Vec3::UnitX()) < 1e-9);
}

TEST_CASE("riemannian mean") {
  const Surface P = grid_surface(21);
  const MlsModel mlsP(P);
  const double eps = P.epsilon0();

  SUBCASE("single point") {
    const Vec3 p(0.31, 0.47, 0);
    const std::vector<Vec3> pts{p};
    const std::vector<double> w{1.0};
    CHECK(riemannian_mean(P, mlsP, pts, w) == p);
  }
  SUBCASE("planar midpoint") {
    const std::vector<Vec3> pts{Vec3(0.3, 0.4, 0), Vec3(0.52, 0.47, 0)};
    const std::vector<double> w{1.0, 1.0};
    CHECK((riemannian_mean(P, mlsP, pts, w) - Vec3(0.41, 0.435, 0)).norm() <= 0.05 * eps);
  }
  SUBCASE("spread precondition") {
    const std::vector<Vec3> pts{Vec3(0.0, 0.0, 0), Vec3(0.9, 0.9, 0)};
    const std::vector<double> w{1.0, 1.0};
    CHECK_THROWS_AS(riemannian_mean(P, mlsP, pts, w), PreconditionError);
  }
  SUBCASE("no positive weight") {
    const std::vector<Vec3> pts{Vec3(0.3, 0.4, 0)};
    const std::vector<double> w{0.0};
    CHECK_THROWS_AS(riemannian_mean(P, mlsP, pts, w), PreconditionError);
  }
  SUBCASE("sphere matches a brute-force Frechet search") {
    const Surface S = sphere_surface(4);
    const MlsModel mls(S);
    const std::vector<Vec3> pts{Vec3(0.15, 0.02, 1).normalized(), Vec3(-0.05, 0.12, 1).normalized(),
                                Vec3(0.02, -0.1, 1).normalized()};
    const std::vector<double> w{1.0, 1.0, 1.0};
    const Vec3 mean = riemannian_mean(S, mls, pts, w);
    VertexId best = kNoVertex;
    double bestF = kInf;
    for (std::size_t v = 0; v < S.vertex_count(); ++v) {
      const Vec3 q = S.position(static_cast<VertexId>(v)).normalized();
      double f = 0.0;
      for (const Vec3& p : pts) f += std::pow(std::acos(std::clamp(p.dot(q), -1.0, 1.0)), 2);
      if (f < bestF) bestF = f, best = static_cast<VertexId>(v);
    }
    CHECK((mean - S.position(best)).norm() <= S.epsilon0());
  }
}

TEST_CASE("identity growth on a plane covers everything") {
  PlaneFixture f(21);
  const GrowContext ctx(f.S, f.mlsS, f.hier, f.T, f.mlsT);
  GrowReport report;
  const PartialMap map = grow_region(identity_seed(f.S, grid_vertex(21, 10, 10)), ctx, {}, &report);
  CHECK(map.size() == f.S.vertex_count());
  CHECK(max_identity_error(map, f.S) <= 1.5 * f.S.epsilon0());
  CHECK(stretch_violations(map, ctx, 0.5 * f.S.epsilon0() + 1e-6).empty());
  CHECK(map.area == doctest::Approx(1.0));
  CHECK(map.seed_distance(map.seedVertex) == 0.0);
  CHECK(!report.optimizations.empty());
  for (const auto& opt : report.optimizations)
    for (std::size_t k = 1; k < opt.objective.size(); ++k) CHECK(opt.objective[k] <= opt.objective[k - 1]);
}

TEST_CASE("growth from a rotated seed yields the rotated map") {
  PlaneFixture f(21);
  const GrowContext ctx(f.S, f.mlsS, f.hier, f.T, f.mlsT);
  const VertexId c = grid_vertex(21, 10, 10);
  OrientedPointMatch seed = identity_seed(f.S, c);
  seed.dt = -Vec3::UnitX();
  const PartialMap map = grow_region(seed, ctx);
  // Half-turn about the centre maps the whole square onto itself.
  CHECK(map.size() == f.S.vertex_count());
  double e = 0.0;
  const Vec3 o = f.S.position(c);
  for (VertexId v : map.domain()) {
    const Vec3 r = o - (f.S.position(v) - o);
    e = std::max(e, (map.image(v) - r).norm());
  }
  CHECK(e <= 1.5 * f.S.epsilon0());
}

TEST_CASE("optimize_metric") {
  PlaneFixture f(21);
  const GrowContext ctx(f.S, f.mlsS, f.hier, f.T, f.mlsT);
  GrowingParams params;
  params.optimize = false;
  const VertexId c = grid_vertex(21, 10, 10);
  PartialMap map = grow_region(identity_seed(f.S, c), ctx, params);
  REQUIRE(map.size() == f.S.vertex_count());
  const double eps = f.S.epsilon0();

  SUBCASE("exact isometry is a fixed point") {
    for (VertexId v : map.domain()) map.set_image(v, f.S.position(v));
    const auto before = map.images();
    const auto rep = optimize_metric(map, ctx, params);
    CHECK(rep.objective.front() < 1e-20);
    for (std::size_t k = 0; k < before.size(); ++k) CHECK((map.images()[k] - before[k]).norm() <= 0.05 * eps);
  }
  SUBCASE("a perturbed image moves back") {
    const VertexId v = grid_vertex(21, 13, 11);
    const Vec3 truth = f.S.position(v);
    map.set_image(v, truth + Vec3(0.5 * eps, 0, 0));
    const auto rep = optimize_metric(map, ctx, params);
    REQUIRE(rep.objective.size() >= 2);
    CHECK(rep.objective.back() < rep.objective.front());
    CHECK((map.image(v) - truth).norm() <= 0.25 * eps);
    for (std::size_t k = 1; k < rep.objective.size(); ++k) CHECK(rep.objective[k] <= rep.objective[k - 1]);
    CHECK(metric_objective(map, ctx) == doctest::Approx(rep.objective.back()).epsilon(1e-9));
    CHECK(map.image(c) == f.S.position(c));
  }
  SUBCASE("images stay on the surface") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 0.2 * eps);
    for (VertexId v : map.domain())
      if (v != c) map.set_image(v, map.image(v) + Vec3(g(rng), g(rng), 0));
    const auto rep = optimize_metric(map, ctx, params);
    CHECK(rep.objective.back() < 0.5 * rep.objective.front());
    for (VertexId v : map.domain()) CHECK(std::abs(map.image(v).z()) < 1e-9);
  }
  SUBCASE("too few vertices") {
    PartialMap tiny(f.S.vertex_count());
    tiny.add(c, f.S.position(c), Vec3::UnitX(), Vec3::UnitX(), 0.0);
    tiny.seedVertex = c;
    CHECK_THROWS_AS(optimize_metric(tiny, ctx, params), PreconditionError);
  }
}

TEST_CASE("growth is equivariant under rigid motions") {
  SyntheticOptions opts;
  opts.noise = 0.02 / 14.0;
  const auto pair = generate_synthetic(SyntheticKind::plane, 15, opts);
  const Eigen::Isometry3d A = testing::sample_rigid_motion(3), B = testing::sample_rigid_motion(4);
  auto moved = [](const Surface& s, const Eigen::Isometry3d& m) {
    std::vector<Vec3> v;
    for (std::size_t i = 0; i < s.vertex_count(); ++i) v.push_back(m * s.position(static_cast<VertexId>(i)));
    return Surface::from_mesh(v, s.faces());
  };
  const Surface S2 = moved(pair.S, A), T2 = moved(pair.T, B);
  const MlsModel m1(pair.S), m2(pair.T), m3(S2), m4(T2);
  const auto h1 = build_hierarchy(pair.S), h2 = build_hierarchy(S2);
  const GrowContext c1(pair.S, m1, h1, pair.T, m2), c2(S2, m3, h2, T2, m4);
  const VertexId sv = grid_vertex(15, 7, 7);
  OrientedPointMatch s1;
  s1.s = pair.S.position(sv);
  s1.t = pair.T.position(sv);
  s1.ds = tangent_frame(pair.S, sv).u;
  s1.dt = frame_from_normal(s1.t, pair.T.normal(sv)).u;
  OrientedPointMatch s2 = s1;
  s2.s = A * s1.s;
  s2.ds = A.linear() * s1.ds;
  s2.t = B * s1.t;
  s2.dt = B.linear() * s1.dt;
  const PartialMap a = grow_region(s1, c1), b = grow_region(s2, c2);
  REQUIRE(a.domain() == b.domain());
  CHECK(a.size() > pair.S.vertex_count() / 2);
  double e = 0.0;
  for (VertexId v : a.domain()) e = std::max(e, (B * a.image(v) - b.image(v)).norm());
  CHECK(e <= 1e-6);
}
