#include "isogrow/geodesics.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace isogrow {

namespace fs = std::filesystem;

DijkstraResult dijkstra(const Graph& graph, VertexId source, double radiusCap) {
  const std::size_t n = graph.vertex_count();
  if (source < 0 || static_cast<std::size_t>(source) >= n) throw PreconditionError("dijkstra source out of range");
  DijkstraResult r{std::vector<double>(n, kInf), std::vector<VertexId>(n, kNoVertex)};
  std::vector<std::uint8_t> done(n, 0);
  using Item = std::pair<double, VertexId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  r.distance[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (done[v]) continue;
    done[v] = 1;
    const auto nbrs = graph.neighbors(v);
    const auto ws = graph.weights(v);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const double nd = d + ws[k];
      const VertexId w = nbrs[k];
      if (nd <= radiusCap && nd < r.distance[w]) {
        r.distance[w] = nd;
        r.predecessor[w] = v;
        heap.emplace(nd, w);
      }
    }
  }
  return r;
}

DijkstraResult dijkstra(const Surface& surface, VertexId source, double radiusCap) {
  return dijkstra(surface.connectivity(), source, radiusCap);
}

std::vector<VertexId> LocalDijkstra::path_to(VertexId target) const {
  std::vector<VertexId> path;
  if (dist_[target] == kInf) return path;
  for (VertexId v = target; v != kNoVertex; v = pred_[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

double polyline_length(std::span<const Vec3> points) {
  double len = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) len += (points[i] - points[i - 1]).norm();
  return len;
}

GeodesicPath path_through(const Surface& surface, std::span<const VertexId> vertices) {
  GeodesicPath p;
  for (VertexId v : vertices) p.points.push_back(surface.position(v));
  p.length = polyline_length(p.points);
  if (!vertices.empty()) p.endpointsVertexIds = {vertices.front(), vertices.back()};
  return p;
}

GeodesicPath shortest_path(const Surface& surface, const Graph& graph, VertexId from, VertexId to) {
  const auto r = dijkstra(graph, from);
  std::vector<VertexId> verts;
  if (r.distance[to] == kInf) return {};
  for (VertexId v = to; v != kNoVertex; v = r.predecessor[v]) verts.push_back(v);
  std::reverse(verts.begin(), verts.end());
  return path_through(surface, verts);
}

std::vector<Vec3> resample_polyline(std::span<const Vec3> points, double spacing) {
  std::vector<Vec3> out;
  if (points.size() < 2) {
    out.assign(points.begin(), points.end());
    return out;
  }
  const double total = polyline_length(points);
  const auto segments = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(total / spacing - 1e-9)));
  const double step = total / static_cast<double>(segments);
  out.reserve(segments + 1);
  out.push_back(points.front());
  std::size_t seg = 1;
  double segStart = 0.0;
  for (std::size_t k = 1; k < segments; ++k) {
    const double target = step * static_cast<double>(k);
    while (seg + 1 < points.size() && segStart + (points[seg] - points[seg - 1]).norm() < target) {
      segStart += (points[seg] - points[seg - 1]).norm();
      ++seg;
    }
    const double segLen = (points[seg] - points[seg - 1]).norm();
    const double t = segLen > 0 ? std::clamp((target - segStart) / segLen, 0.0, 1.0) : 0.0;
    out.push_back(points[seg - 1] + t * (points[seg] - points[seg - 1]));
  }
  out.push_back(points.back());
  return out;
}

namespace {

struct ProjectedPath {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  bool ok = true;
};

// Projects interior points; endpoints are kept verbatim.
ProjectedPath project_interior(const MlsModel& mls, std::vector<Vec3> pts, const Vec3& nFirst, const Vec3& nLast) {
  ProjectedPath out;
  out.normals.resize(pts.size());
  out.normals.front() = nFirst;
  out.normals.back() = nLast;
  for (std::size_t k = 1; k + 1 < pts.size(); ++k) {
    const Projection pr = mls_project(mls, pts[k]);
    if (pr.fallback) out.ok = false;
    pts[k] = pr.point;
    out.normals[k] = pr.normal;
  }
  out.points = std::move(pts);
  return out;
}

}  // namespace

GeodesicPath smooth_path(const Surface& surface, const MlsModel& mls, const GeodesicPath& initial,
                         const SmoothingOptions& options) {
  GeodesicPath unsmoothed = initial;
  unsmoothed.smoothed = false;
  if (initial.points.size() < 2) return unsmoothed;
  try {
    const Vec3 a = initial.points.front(), b = initial.points.back();
    const Vec3 nA = mls_project(mls, a).normal, nB = mls_project(mls, b).normal;
    auto cur = project_interior(mls, resample_polyline(initial.points, options.spacingFactor * surface.epsilon0()), nA, nB);
    if (!cur.ok) return unsmoothed;
    double len = polyline_length(cur.points);
    GeodesicPath out;
    out.endpointsVertexIds = initial.endpointsVertexIds;
    out.iterationLengths.push_back(len);
    const std::size_t m = cur.points.size();
    if (m >= 3) {
      std::vector<Vec3> g(m, Vec3::Zero()), gPrev(m, Vec3::Zero()), d(m, Vec3::Zero());
      double alpha = 0.25 * surface.epsilon0();
      bool havePrev = false;
      for (int it = 0; it < options.maxIterations; ++it) {
        // Length gradient restricted to the tangent plane and to motion across the path.
        double gg = 0.0;
        for (std::size_t k = 1; k + 1 < m; ++k) {
          const Vec3 e0 = cur.points[k] - cur.points[k - 1], e1 = cur.points[k + 1] - cur.points[k];
          Vec3 gk = Vec3::Zero();
          if (e0.norm() > 0) gk += e0.normalized();
          if (e1.norm() > 0) gk -= e1.normalized();
          const Vec3& nk = cur.normals[k];
          gk -= gk.dot(nk) * nk;
          Vec3 tau = cur.points[k + 1] - cur.points[k - 1];
          tau -= tau.dot(nk) * nk;
          if (tau.norm() > 0) {
            tau.normalize();
            gk -= gk.dot(tau) * tau;
          }
          g[k] = gk;
          gg += gk.squaredNorm();
        }
        if (gg < 1e-30) break;
        double beta = 0.0;
        if (havePrev) {
          double num = 0.0, den = 0.0;
          for (std::size_t k = 1; k + 1 < m; ++k) {
            num += g[k].dot(g[k] - gPrev[k]);
            den += gPrev[k].squaredNorm();
          }
          beta = den > 0 ? std::max(0.0, num / den) : 0.0;
        }
        double slope = 0.0, dmax = 0.0;
        for (std::size_t k = 1; k + 1 < m; ++k) {
          d[k] = -g[k] + beta * d[k];
          slope += g[k].dot(d[k]);
        }
        if (slope >= 0) {
          for (std::size_t k = 1; k + 1 < m; ++k) d[k] = -g[k];
        }
        for (std::size_t k = 1; k + 1 < m; ++k) dmax = std::max(dmax, d[k].norm());
        if (dmax <= 0) break;
        // Cap the largest single-point move at half a sample spacing.
        double step = std::min(2.0 * alpha, 0.5 * surface.epsilon0()) / dmax;
        bool accepted = false;
        ProjectedPath trial;
        double trialLen = len;
        for (int bt = 0; bt < 30; ++bt) {
          std::vector<Vec3> moved = cur.points;
          for (std::size_t k = 1; k + 1 < m; ++k) moved[k] += step * d[k];
          trial = project_interior(mls, std::move(moved), nA, nB);
          trialLen = polyline_length(trial.points);
          if (trial.ok && trialLen < len) {
            accepted = true;
            break;
          }
          step *= 0.5;
        }
        if (!accepted) break;
        alpha = step * dmax;
        const double rel = (len - trialLen) / len;
        cur = std::move(trial);
        len = trialLen;
        out.iterationLengths.push_back(len);
        gPrev = g;
        havePrev = true;
        if (rel < options.relativeTolerance) break;
      }
    }
    out.points = std::move(cur.points);
    out.length = len;
    out.smoothed = true;
    return out;
  } catch (const OutOfBandError&) {
    return unsmoothed;
  }
}

bool TopologyHierarchy::are_neighbors(VertexId a, VertexId b, std::size_t minLevel) const {
  for (std::size_t j = minLevel; j < levels.size(); ++j) {
    const auto& L = levels[j];
    const VertexId oa = L.owner[a], ob = L.owner[b];
    if (oa == kNoVertex || ob == kNoVertex) continue;
    if (oa == ob) return true;
    const auto& adj = L.adjacency[L.slot[oa]];
    if (std::binary_search(adj.begin(), adj.end(), L.slot[ob])) return true;
  }
  return false;
}

std::vector<VertexId> TopologyHierarchy::sample_neighbors(std::size_t level, VertexId v) const {
  const auto& L = levels[level];
  std::vector<VertexId> out;
  if (L.slot[v] < 0) return out;
  for (std::int32_t k : L.adjacency[L.slot[v]]) out.push_back(L.samples[k]);
  return out;
}

namespace {

void finish_level(HierarchyLevel& L, std::size_t n) {
  std::sort(L.samples.begin(), L.samples.end());
  L.slot.assign(n, -1);
  for (std::size_t k = 0; k < L.samples.size(); ++k) L.slot[L.samples[k]] = static_cast<std::int32_t>(k);
  for (auto& e : L.edges)
    if (e.first > e.second) std::swap(e.first, e.second);
  std::sort(L.edges.begin(), L.edges.end());
  L.edges.erase(std::unique(L.edges.begin(), L.edges.end()), L.edges.end());
  L.adjacency.assign(L.samples.size(), {});
  for (const auto& [a, b] : L.edges) {
    L.adjacency[L.slot[a]].push_back(L.slot[b]);
    L.adjacency[L.slot[b]].push_back(L.slot[a]);
  }
  for (auto& adj : L.adjacency) std::sort(adj.begin(), adj.end());
}

struct UnionFind {
  std::vector<std::int32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::int32_t find(std::int32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

}  // namespace

TopologyHierarchy build_hierarchy(const Surface& surface, int levels) {
  const std::size_t n = surface.vertex_count();
  const Graph& g = surface.geodesic_graph();
  TopologyHierarchy h;
  h.levels.resize(levels);

  auto& L0 = h.levels[0];
  L0.spacing = surface.epsilon0();
  L0.owner.assign(n, kNoVertex);
  for (VertexId v = 0; v < static_cast<VertexId>(n); ++v) {
    if (!surface.active(v)) continue;
    L0.samples.push_back(v);
    L0.owner[v] = v;
    for (VertexId w : surface.adjacency()[v])
      if (w > v && surface.active(w)) L0.edges.emplace_back(v, w);
  }
  finish_level(L0, n);

  LocalDijkstra local(n);
  for (int j = 1; j < levels; ++j) {
    const auto& prev = h.levels[j - 1];
    auto& L = h.levels[j];
    L.spacing = 2.0 * prev.spacing;
    std::vector<double> mind(n, kInf);
    L.owner.assign(n, kNoVertex);

    // Farthest-point sampling over the previous level's samples.
    VertexId pick = prev.samples.empty() ? kNoVertex : prev.samples.front();
    using Item = std::pair<double, VertexId>;
    while (pick != kNoVertex) {
      L.samples.push_back(pick);
      std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
      mind[pick] = 0.0;
      L.owner[pick] = pick;
      heap.emplace(0.0, pick);
      while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > mind[v]) continue;
        const auto nbrs = g.neighbors(v);
        const auto ws = g.weights(v);
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
          const double nd = d + ws[k];
          if (nd < mind[nbrs[k]]) {
            mind[nbrs[k]] = nd;
            L.owner[nbrs[k]] = pick;
            heap.emplace(nd, nbrs[k]);
          }
        }
      }
      pick = kNoVertex;
      double best = -1.0;
      for (VertexId c : prev.samples) {
        if (mind[c] > best) {
          best = mind[c];
          pick = c;
        }
      }
      if (best < L.spacing * (1.0 - 1e-9)) pick = kNoVertex;
    }

    std::vector<std::uint8_t> isSample(n, 0);
    for (VertexId s : L.samples) isSample[s] = 1;
    const double reach = kHierarchyConnectFactor * L.spacing;
    for (VertexId a : L.samples) {
      local.run(g, a, reach);
      for (VertexId b : local.settled())
        if (b != a && isSample[b]) L.edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    finish_level(L, n);

    // Keep every connected component of the surface connected at this level.
    UnionFind uf(L.samples.size());
    for (const auto& [a, b] : L.edges) uf.unite(L.slot[a], L.slot[b]);
    bool added = false;
    for (VertexId v = 0; v < static_cast<VertexId>(n); ++v) {
      if (L.owner[v] == kNoVertex) continue;
      for (VertexId w : surface.adjacency()[v]) {
        if (L.owner[w] == kNoVertex) continue;
        const VertexId oa = L.owner[v], ob = L.owner[w];
        if (oa != ob && uf.unite(L.slot[oa], L.slot[ob])) {
          L.edges.emplace_back(std::min(oa, ob), std::max(oa, ob));
          added = true;
        }
      }
    }
    if (added) finish_level(L, n);
  }
  return h;
}

namespace {
constexpr char kCacheMagic[4] = {'I', 'G', 'H', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

template <class T>
void put(std::ostream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
bool get(std::istream& i, T& v) {
  return static_cast<bool>(i.read(reinterpret_cast<char*>(&v), sizeof v));
}
template <class T>
void put_vec(std::ostream& o, const std::vector<T>& v) {
  put(o, static_cast<std::uint64_t>(v.size()));
  o.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <class T>
bool get_vec(std::istream& i, std::vector<T>& v, std::uint64_t limit) {
  std::uint64_t n = 0;
  if (!get(i, n) || n > limit) return false;
  v.resize(n);
  return static_cast<bool>(i.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T))));
}
}  // namespace

void save_hierarchy(const fs::path& file, const TopologyHierarchy& h, std::uint64_t contentHash) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary);
    if (!o) throw Error("cannot write hierarchy cache " + tmp.string());
    o.write(kCacheMagic, 4);
    put(o, kCacheVersion);
    put(o, contentHash);
    put(o, static_cast<std::uint32_t>(h.levels.size()));
    for (const auto& L : h.levels) {
      put(o, L.spacing);
      put_vec(o, L.samples);
      std::vector<VertexId> flat;
      for (const auto& [a, b] : L.edges) {
        flat.push_back(a);
        flat.push_back(b);
      }
      put_vec(o, flat);
      put_vec(o, L.owner);
    }
  }
  fs::rename(tmp, file);
}

std::optional<TopologyHierarchy> load_hierarchy(const fs::path& file, std::uint64_t contentHash) {
  std::ifstream i(file, std::ios::binary);
  if (!i) return std::nullopt;
  char magic[4];
  std::uint32_t version = 0, nlev = 0;
  std::uint64_t hash = 0;
  if (!i.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0) return std::nullopt;
  if (!get(i, version) || version != kCacheVersion) return std::nullopt;
  if (!get(i, hash) || hash != contentHash) return std::nullopt;
  if (!get(i, nlev) || nlev > 64) return std::nullopt;
  TopologyHierarchy h;
  h.levels.resize(nlev);
  constexpr std::uint64_t limit = 1ull << 32;
  for (auto& L : h.levels) {
    std::vector<VertexId> flat;
    if (!get(i, L.spacing) || !get_vec(i, L.samples, limit) || !get_vec(i, flat, limit) ||
        !get_vec(i, L.owner, limit))
      return std::nullopt;
    if (flat.size() % 2 != 0) return std::nullopt;
    for (std::size_t k = 0; k < flat.size(); k += 2) L.edges.emplace_back(flat[k], flat[k + 1]);
    const std::size_t n = L.owner.size();
    for (VertexId s : L.samples)
      if (s < 0 || static_cast<std::size_t>(s) >= n) return std::nullopt;
    finish_level(L, n);
  }
  return h;
}

TopologyHierarchy build_hierarchy_cached(const Surface& surface, const fs::path& cacheDir) {
  const std::uint64_t hash = surface.content_hash();
  std::ostringstream name;
  name << "hierarchy_" << std::hex << hash << ".bin";
  const fs::path file = cacheDir / name.str();
  if (auto cached = load_hierarchy(file, hash)) {
    if (cached->levels.size() == static_cast<std::size_t>(kHierarchyLevels) &&
        cached->levels[0].owner.size() == surface.vertex_count()) {
      spdlog::debug("hierarchy cache hit: {}", file.string());
      return std::move(*cached);
    }
  }
  TopologyHierarchy h = build_hierarchy(surface);
  save_hierarchy(file, h, hash);
  return h;
}

}  // namespace isogrow
