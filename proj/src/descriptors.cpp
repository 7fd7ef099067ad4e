#include "isogrow/descriptors.hpp"

#include "isogrow/geodesics.hpp"
#include "isogrow/mesh_io.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numbers>

namespace isogrow {

bool Descriptor::any_valid() const { return std::find(valid.begin(), valid.end(), true) != valid.end(); }

std::array<double, kContours> contour_radii(double rMin, double rMax) {
  std::array<double, kContours> r{};
  for (int i = 0; i < kContours; ++i) r[i] = rMin + (rMax - rMin) * i / (kContours - 1);
  return r;
}

namespace {

// Length of the level set {d = r} over the triangles that touch the field.
double mesh_contour_length(const Surface& s, const LocalDijkstra& field, const std::vector<std::int32_t>& tris,
                           double r) {
  double len = 0.0;
  for (std::int32_t t : tris) {
    const auto& tri = s.triangles()[t];
    double d[3];
    bool ok = true;
    for (int k = 0; k < 3; ++k) {
      d[k] = field.distance(tri[k]);
      if (d[k] == kInf) ok = false;
    }
    if (!ok) continue;
    Vec3 pts[2];
    int found = 0;
    for (int k = 0; k < 3 && found < 2; ++k) {
      const int a = k, b = (k + 1) % 3;
      const bool aa = d[a] >= r, ba = d[b] >= r;
      if (aa == ba) continue;
      const double t01 = (r - d[a]) / (d[b] - d[a]);
      pts[found++] = s.position(tri[a]) + t01 * (s.position(tri[b]) - s.position(tri[a]));
    }
    if (found == 2) len += (pts[1] - pts[0]).norm();
  }
  return len;
}

}  // namespace

Descriptor fingerprint(const Surface& surface, VertexId vertex, double rMin, double rMax) {
  if (!(rMin > 0 && rMin < rMax)) throw PreconditionError("fingerprint needs 0 < rMin < rMax");
  if (vertex < 0 || static_cast<std::size_t>(vertex) >= surface.vertex_count())
    throw PreconditionError("fingerprint vertex out of range");
  if (!surface.active(vertex)) throw PreconditionError("fingerprint of an isolated vertex");
  thread_local LocalDijkstra field(0);
  if (field.capacity() != surface.vertex_count()) field = LocalDijkstra(surface.vertex_count());
  const double eps = surface.epsilon0();
  const double cap = rMax + 4.0 * eps;
  field.run(surface.geodesic_graph(), vertex, cap);

  const auto& settled = field.settled();
  const double reach = field.distance(settled.back());
  std::vector<std::int32_t> tris;
  if (surface.is_mesh()) {
    for (VertexId v : settled)
      for (std::int32_t t : surface.vertex_triangles(v)) tris.push_back(t);
    std::sort(tris.begin(), tris.end());
    tris.erase(std::unique(tris.begin(), tris.end()), tris.end());
  }

  Descriptor D;
  const auto radii = contour_radii(rMin, rMax);
  for (int i = 0; i < kContours; ++i) {
    const double r = radii[i];
    // settled is ordered by distance, so the count within r is a prefix length.
    const auto within = std::upper_bound(settled.begin(), settled.end(), r,
                                         [&](double x, VertexId v) { return x < field.distance(v); }) -
                        settled.begin();
    if (reach < r || within < kMinContourVertices) {
      D.entries[i] = -1.0;
      D.valid[i] = false;
      continue;
    }
    double L = 0.0;
    if (surface.is_mesh()) {
      L = mesh_contour_length(surface, field, tris, r);
    } else {
      std::size_t band = 0;
      for (VertexId v : settled)
        if (std::abs(field.distance(v) - r) <= 0.5 * eps) ++band;
      L = static_cast<double>(band) * eps;
    }
    D.entries[i] = L / (2.0 * std::numbers::pi * r) - 1.0;
    D.valid[i] = true;
  }
  return D;
}

std::vector<Descriptor> compute_descriptors(const Surface& surface, double rMin, double rMax, unsigned threads) {
  std::vector<Descriptor> out(surface.vertex_count());
  parallel_for(surface.vertex_count(), threads, [&](std::size_t v) {
    if (!surface.active(static_cast<VertexId>(v))) {
      out[v].entries.fill(-1.0);
      return;
    }
    out[v] = fingerprint(surface, static_cast<VertexId>(v), rMin, rMax);
  });
  return out;
}

double descriptor_l1(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (int i = 0; i < kContours; ++i)
    if (a.valid[i] && b.valid[i]) s += std::abs(a.entries[i] - b.entries[i]);
  return s;
}

double descriptor_l2_squared(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (int i = 0; i < kContours; ++i)
    if (a.valid[i] && b.valid[i]) s += (a.entries[i] - b.entries[i]) * (a.entries[i] - b.entries[i]);
  return s;
}

std::vector<double> distinctiveness(const Surface& surface, const std::vector<Descriptor>& descriptors,
                                    unsigned threads) {
  const std::size_t n = descriptors.size();
  std::vector<VertexId> others;
  for (VertexId v = 0; v < static_cast<VertexId>(n); ++v)
    if (surface.active(v)) others.push_back(v);
  const double activeCount = static_cast<double>(others.size());
  double scale = 1.0;
  if (others.size() > kDistinctivenessSampleLimit) {
    std::vector<VertexId> sub;
    const double step = activeCount / static_cast<double>(kDistinctivenessSampleLimit);
    for (std::size_t k = 0; k < kDistinctivenessSampleLimit; ++k)
      sub.push_back(others[static_cast<std::size_t>(std::floor(k * step))]);
    others = std::move(sub);
    scale = activeCount / static_cast<double>(others.size());
  }
  std::vector<double> F(n, 0.0);
  parallel_for(n, threads, [&](std::size_t s) {
    if (!surface.active(static_cast<VertexId>(s))) return;
    double sum = 0.0;
    for (VertexId x : others) sum += descriptor_l1(descriptors[s], descriptors[x]);
    F[s] = sum * scale;
  });
  return F;
}

FeatureSet detect_features(const Surface& surface, std::vector<Descriptor> descriptors, double R, unsigned threads) {
  FeatureSet fs;
  fs.distinctiveness = distinctiveness(surface, descriptors, threads);
  fs.descriptors = std::move(descriptors);
  const std::size_t n = surface.vertex_count();
  const double maxF = fs.distinctiveness.empty() ? 0.0
                                                 : *std::max_element(fs.distinctiveness.begin(), fs.distinctiveness.end());
  const double tol = 1e-9 * maxF;
  std::vector<std::uint8_t> isFeature(n, 0);
  parallel_for(n, threads, [&](std::size_t s) {
    const auto v = static_cast<VertexId>(s);
    if (!surface.active(v) || !fs.descriptors[s].any_valid()) return;
    thread_local LocalDijkstra local(0);
    if (local.capacity() != n) local = LocalDijkstra(n);
    local.run(surface.geodesic_graph(), v, R);
    const double f = fs.distinctiveness[s];
    for (VertexId x : local.settled())
      if (x != v && !(f > fs.distinctiveness[x] + tol)) return;
    isFeature[s] = 1;
  });
  for (VertexId v = 0; v < static_cast<VertexId>(n); ++v)
    if (isFeature[v]) fs.featureVertexIds.push_back(v);
  if (fs.featureVertexIds.empty()) spdlog::warn("no feature points detected");
  return fs;
}

void write_distinctiveness_ply(const std::filesystem::path& path, const Surface& surface,
                               const std::vector<double>& F) {
  PlyExtras extras;
  const double hi = F.empty() ? 0.0 : *std::max_element(F.begin(), F.end());
  const double lo = F.empty() ? 0.0 : *std::min_element(F.begin(), F.end());
  for (double f : F) {
    const double t = hi > lo ? (f - lo) / (hi - lo) : 0.0;
    extras.colors.push_back({static_cast<std::uint8_t>(255 * t), 0, static_cast<std::uint8_t>(255 * (1 - t))});
  }
  extras.scalars["distinctiveness"] = F;
  write_ply(path, surface.positions(), surface.faces(), surface.normals(), extras);
}

}  // namespace isogrow
