#include "isogrow/synthetic.hpp"

#include "isogrow/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace isogrow {

SyntheticKind parse_synthetic_kind(const std::string& name) {
  static const std::map<std::string, SyntheticKind> kinds = {
      {"plane", SyntheticKind::plane},       {"plane_peaks", SyntheticKind::plane_peaks},
      {"plane_hill", SyntheticKind::plane_hill}, {"sphere", SyntheticKind::sphere},
      {"cylinder", SyntheticKind::cylinder}, {"plane_hole", SyntheticKind::plane_hole}};
  auto it = kinds.find(name);
  if (it == kinds.end()) throw PreconditionError("unknown synthetic kind: " + name);
  return it->second;
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::plane: return "plane";
    case SyntheticKind::plane_peaks: return "plane_peaks";
    case SyntheticKind::plane_hill: return "plane_hill";
    case SyntheticKind::sphere: return "sphere";
    case SyntheticKind::cylinder: return "cylinder";
    case SyntheticKind::plane_hole: return "plane_hole";
  }
  return "unknown";
}

namespace {
double bump(double x, double y, double cx, double cy, double height, double width) {
  const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
  return height * std::exp(-r2 / (2.0 * width * width));
}
}  // namespace

double peaks_height(double x, double y) {
  double h = 0.0;
  for (const auto& c : kPeakCenters) h += bump(x, y, c[0], c[1], kPeakHeight, kPeakWidth);
  return h;
}

double hill_height(double x, double y) { return bump(x, y, 0.5, 0.5, kHillHeight, kHillWidth); }

RawSurface plane_grid(int n) {
  RawSurface m;
  const double step = 1.0 / (n - 1);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) m.vertices.emplace_back(i * step, j * step, 0.0);
  for (int j = 0; j + 1 < n; ++j)
    for (int i = 0; i + 1 < n; ++i) {
      const VertexId a = j * n + i;
      m.faces.push_back({a, a + 1, a + 1 + n, a + n});
    }
  return m;
}

RawSurface icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  RawSurface m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  std::vector<std::array<VertexId, 3>> tris = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<VertexId, VertexId>, VertexId> mid;
    auto midpoint = [&](VertexId a, VertexId b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      const auto id = static_cast<VertexId>(m.vertices.size());
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<VertexId, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& f : tris) {
      const VertexId ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }
  for (const auto& f : tris) m.faces.push_back({f[0], f[1], f[2]});
  return m;
}

RawSurface cylinder_grid(int nTheta, int nz, double radius, double height) {
  RawSurface m;
  for (int j = 0; j < nz; ++j) {
    const double z = height * j / (nz - 1);
    for (int k = 0; k < nTheta; ++k) {
      const double th = 2.0 * std::numbers::pi * k / nTheta;
      m.vertices.emplace_back(radius * std::cos(th), radius * std::sin(th), z);
    }
  }
  for (int j = 0; j + 1 < nz; ++j)
    for (int k = 0; k < nTheta; ++k) {
      const VertexId a = j * nTheta + k, b = j * nTheta + (k + 1) % nTheta;
      m.faces.push_back({a, b, b + nTheta, a + nTheta});
    }
  return m;
}

double sphere_geodesic(const Vec3& a, const Vec3& b, double radius) {
  return radius * std::atan2(a.cross(b).norm(), a.dot(b));
}

double cylinder_geodesic(double theta0, double z0, double theta1, double z1, double radius) {
  double dth = std::fmod(std::abs(theta1 - theta0), 2.0 * std::numbers::pi);
  dth = std::min(dth, 2.0 * std::numbers::pi - dth);
  return std::hypot(radius * dth, z1 - z0);
}

SyntheticPair generate_synthetic(SyntheticKind kind, int resolution, const SyntheticOptions& options) {
  if (resolution < 11) throw PreconditionError("synthetic resolution must be at least 11");
  SyntheticPair pair;
  pair.kind = kind;
  const int n = resolution;
  std::vector<VertexId> targetOf;  // S vertex -> T vertex, or kNoVertex

  switch (kind) {
    case SyntheticKind::plane:
    case SyntheticKind::plane_peaks:
    case SyntheticKind::plane_hill: {
      pair.sourceMesh = plane_grid(n);
      pair.targetMesh = pair.sourceMesh;
      const std::size_t nv = pair.sourceMesh.vertices.size();
      pair.isometricMask.assign(nv, 1);
      for (std::size_t i = 0; i < nv; ++i) {
        Vec3& p = pair.targetMesh.vertices[i];
        double h = 0.0;
        if (kind == SyntheticKind::plane_peaks) h = peaks_height(p.x(), p.y());
        if (kind == SyntheticKind::plane_hill) h = hill_height(p.x(), p.y());
        p.z() = h;
        if (h > kMaskHeight) pair.isometricMask[i] = 0;
      }
      targetOf.resize(nv);
      for (std::size_t i = 0; i < nv; ++i) targetOf[i] = static_cast<VertexId>(i);
      break;
    }
    case SyntheticKind::plane_hole: {
      pair.sourceMesh = plane_grid(n);
      const auto& sv = pair.sourceMesh.vertices;
      const std::size_t nv = sv.size();
      std::vector<VertexId> remap(nv, kNoVertex);
      for (std::size_t i = 0; i < nv; ++i) {
        if (std::hypot(sv[i].x() - 0.5, sv[i].y() - 0.5) < kHoleRadius) continue;
        remap[i] = static_cast<VertexId>(pair.targetMesh.vertices.size());
        pair.targetMesh.vertices.push_back(sv[i]);
      }
      for (const auto& f : pair.sourceMesh.faces) {
        std::vector<VertexId> g;
        for (VertexId v : f) g.push_back(remap[v]);
        if (std::find(g.begin(), g.end(), kNoVertex) == g.end()) pair.targetMesh.faces.push_back(g);
      }
      targetOf = remap;
      pair.isometricMask.resize(nv);
      for (std::size_t i = 0; i < nv; ++i) pair.isometricMask[i] = remap[i] != kNoVertex;
      break;
    }
    case SyntheticKind::sphere: {
      int best = 0;
      for (int level = 1; level <= 7; ++level) {
        const auto count = [](int l) { return 10.0 * std::pow(4.0, l) + 2.0; };
        if (std::abs(count(level) - double(n) * n) < std::abs(count(best) - double(n) * n)) best = level;
      }
      pair.sourceMesh = icosphere(best);
      pair.targetMesh = pair.sourceMesh;
      break;
    }
    case SyntheticKind::cylinder: {
      const int nTheta = std::max(8, 4 * static_cast<int>(std::lround(std::numbers::pi * (n - 1) / 4.0)));
      pair.sourceMesh = cylinder_grid(nTheta, n, kCylinderRadius, kCylinderHeight);
      pair.targetMesh = pair.sourceMesh;
      break;
    }
  }

  const std::size_t nv = pair.sourceMesh.vertices.size();
  if (targetOf.empty()) {
    targetOf.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) targetOf[i] = static_cast<VertexId>(i);
    pair.isometricMask.assign(nv, 1);
  }

  // Analytic geodesics, recorded before any jitter.
  const auto& sv = pair.sourceMesh.vertices;
  if (kind == SyntheticKind::sphere) {
    VertexId pole = 0;
    for (std::size_t i = 0; i < nv; ++i)
      if (sv[i].z() > sv[pole].z()) pole = static_cast<VertexId>(i);
    for (double angle : {std::numbers::pi / 4, std::numbers::pi / 2}) {
      const Vec3 target(std::sin(angle), 0.0, std::cos(angle));
      VertexId b = 0;
      for (std::size_t i = 0; i < nv; ++i)
        if ((sv[i] - target).squaredNorm() < (sv[b] - target).squaredNorm()) b = static_cast<VertexId>(i);
      pair.geodesics.push_back({pole, b, sphere_geodesic(sv[pole], sv[b])});
    }
  } else if (kind == SyntheticKind::cylinder) {
    const Vec3 a(kCylinderRadius, 0.0, 0.0), b(0.0, kCylinderRadius, 1.0);
    VertexId ia = 0, ib = 0;
    for (std::size_t i = 0; i < nv; ++i) {
      if ((sv[i] - a).squaredNorm() < (sv[ia] - a).squaredNorm()) ia = static_cast<VertexId>(i);
      if ((sv[i] - b).squaredNorm() < (sv[ib] - b).squaredNorm()) ib = static_cast<VertexId>(i);
    }
    const auto theta = [](const Vec3& p) { return std::atan2(p.y(), p.x()); };
    pair.geodesics.push_back({ia, ib, cylinder_geodesic(theta(sv[ia]), sv[ia].z(), theta(sv[ib]), sv[ib].z())});
  }

  if (options.noise > 0.0) {
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, options.noise);
    for (auto& v : pair.sourceMesh.vertices)
      for (int c = 0; c < 3; ++c) v[c] += gauss(rng);
    for (auto& v : pair.targetMesh.vertices)
      for (int c = 0; c < 3; ++c) v[c] += gauss(rng);
  }

  pair.groundTruth.assign(nv, Vec3::Zero());
  pair.hasTruth.assign(nv, 0);
  for (std::size_t i = 0; i < nv; ++i) {
    if (targetOf[i] == kNoVertex) continue;
    pair.groundTruth[i] = pair.targetMesh.vertices[targetOf[i]];
    pair.hasTruth[i] = 1;
  }
  pair.S = Surface::from_mesh(pair.sourceMesh.vertices, pair.sourceMesh.faces);
  pair.T = Surface::from_mesh(pair.targetMesh.vertices, pair.targetMesh.faces);
  return pair;
}

void write_ground_truth(const std::filesystem::path& path, const std::vector<Vec3>& image,
                        const std::vector<std::uint8_t>& has) {
  std::ofstream o(path);
  if (!o) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!has[i]) continue;
    o << i << ' ' << format_double(image[i].x()) << ' ' << format_double(image[i].y()) << ' '
      << format_double(image[i].z()) << '\n';
  }
}

GroundTruth read_ground_truth(const std::filesystem::path& path, std::size_t sourceVertexCount) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  GroundTruth gt;
  gt.image.assign(sourceVertexCount, Vec3::Zero());
  gt.has.assign(sourceVertexCount, 0);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    long long idx;
    double x, y, z;
    if (!(ss >> idx >> x >> y >> z)) throw FormatError(path.string(), lineNo, "expected: srcIndex tx ty tz");
    if (idx < 0 || static_cast<std::size_t>(idx) >= sourceVertexCount)
      throw FormatError(path.string(), lineNo, "source index out of range");
    gt.image[idx] = Vec3(x, y, z);
    gt.has[idx] = 1;
  }
  return gt;
}

std::vector<OrientedPointMatch> truth_seeds(const SyntheticPair& pair, int count) {
  const Surface& S = pair.S;
  const Surface& T = pair.T;
  std::vector<VertexId> pool;
  Vec3 centroid = Vec3::Zero();
  for (VertexId v = 0; v < VertexId(S.vertex_count()); ++v) {
    if (!pair.hasTruth[v] || !pair.isometricMask[v] || !S.active(v)) continue;
    bool interior = !S.adjacency()[v].empty();
    for (VertexId u : S.adjacency()[v]) interior = interior && pair.hasTruth[u];
    if (!interior) continue;
    pool.push_back(v);
    centroid += S.position(v);
  }
  std::vector<OrientedPointMatch> seeds;
  if (pool.empty() || count <= 0) return seeds;
  centroid /= double(pool.size());
  std::vector<double> dist(pool.size(), kInf);
  std::size_t pick = 0;
  for (std::size_t i = 1; i < pool.size(); ++i)
    if ((S.position(pool[i]) - centroid).squaredNorm() < (S.position(pool[pick]) - centroid).squaredNorm()) pick = i;
  while (int(seeds.size()) < count && int(seeds.size()) < int(pool.size())) {
    const VertexId v = pool[pick];
    const Vec3 n = S.normal(v);
    Vec3 ds = Vec3::UnitX() - Vec3::UnitX().dot(n) * n;
    if (ds.norm() < 0.1) ds = Vec3::UnitY() - Vec3::UnitY().dot(n) * n;
    ds.normalize();
    VertexId best = kNoVertex;
    double bestCos = -2.0;
    for (VertexId u : S.adjacency()[v]) {
      const double c = (S.position(u) - S.position(v)).normalized().dot(ds);
      if (c > bestCos) bestCos = c, best = u;
    }
    OrientedPointMatch m;
    m.s = S.position(v);
    m.ds = ds;
    m.t = pair.groundTruth[v];
    const Vec3 nt = T.normal(T.index().nearest_one(m.t));
    Vec3 dt = pair.groundTruth[best] - m.t;
    dt -= dt.dot(nt) * nt;
    const Vec3 es = (S.position(best) - m.s).normalized();
    // rotate the neighbor direction back onto ds within the target tangent plane
    const double angle = std::atan2(es.cross(ds).dot(n), es.dot(ds));
    m.dt = Eigen::AngleAxisd(angle, nt) * dt.normalized();
    m.sVertex = v;
    m.priority = double(seeds.size());
    seeds.push_back(m);
    for (std::size_t i = 0; i < pool.size(); ++i)
      dist[i] = std::min(dist[i], (S.position(pool[i]) - m.s).squaredNorm());
    pick = std::size_t(std::max_element(dist.begin(), dist.end()) - dist.begin());
    if (dist[pick] == 0.0) break;
  }
  return seeds;
}

void write_synthetic(const SyntheticPair& pair, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_seed_file(dir / "seeds.txt", truth_seeds(pair, 8));
  write_obj(dir / "S.obj", pair.sourceMesh.vertices, pair.sourceMesh.faces);
  write_obj(dir / "T.obj", pair.targetMesh.vertices, pair.targetMesh.faces);
  write_ground_truth(dir / "truth.txt", pair.groundTruth, pair.hasTruth);
  std::ofstream mask(dir / "mask.txt");
  if (!mask) throw Error("cannot write mask file in " + dir.string());
  for (std::size_t i = 0; i < pair.isometricMask.size(); ++i) mask << i << ' ' << int(pair.isometricMask[i]) << '\n';
}

}  // namespace isogrow
