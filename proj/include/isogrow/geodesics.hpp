#pragma once

#include "isogrow/surface.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace isogrow {

struct DijkstraResult {
  std::vector<double> distance;       // kInf where unreachable or beyond the cap
  std::vector<VertexId> predecessor;  // kNoVertex at the source and unreached vertices
};

// Graph shortest paths from `source`, settling only vertices within radiusCap.
DijkstraResult dijkstra(const Graph& graph, VertexId source, double radiusCap = kInf);
// Shortest paths over the surface's level-0 connectivity with Euclidean weights.
DijkstraResult dijkstra(const Surface& surface, VertexId source, double radiusCap = kInf);

// Dijkstra workspace for many small, bounded searches on one graph. Reset
// cost is proportional to the number of vertices touched by the last run.
class LocalDijkstra {
 public:
  explicit LocalDijkstra(std::size_t vertexCount)
      : dist_(vertexCount, kInf), pred_(vertexCount, kNoVertex), settledFlag_(vertexCount, 0) {}

  // allowed(v) filters vertices; weight(a, b, w) maps a stored edge weight.
  template <class Allowed, class Weight>
  void run(const Graph& graph, std::span<const VertexId> sources, double cap, Allowed&& allowed, Weight&& weight) {
    reset();
    using Item = std::pair<double, VertexId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (VertexId s : sources) {
      if (!allowed(s) || dist_[s] == 0.0) continue;
      touch(s);
      dist_[s] = 0.0;
      heap.emplace(0.0, s);
    }
    while (!heap.empty()) {
      const auto [d, v] = heap.top();
      heap.pop();
      if (settledFlag_[v] || d > dist_[v]) continue;
      settledFlag_[v] = 1;
      settled_.push_back(v);
      const auto nbrs = graph.neighbors(v);
      const auto ws = graph.weights(v);
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        const VertexId w = nbrs[k];
        if (settledFlag_[w] || !allowed(w)) continue;
        const double nd = d + weight(v, w, ws[k]);
        if (nd <= cap && nd < dist_[w]) {
          touch(w);
          dist_[w] = nd;
          pred_[w] = v;
          heap.emplace(nd, w);
        }
      }
    }
  }

  void run(const Graph& graph, VertexId source, double cap) {
    const VertexId src[1] = {source};
    run(graph, std::span<const VertexId>(src, 1), cap, [](VertexId) { return true; },
        [](VertexId, VertexId, double w) { return w; });
  }

  std::size_t capacity() const { return dist_.size(); }
  double distance(VertexId v) const { return dist_[v]; }
  VertexId predecessor(VertexId v) const { return pred_[v]; }
  // Settled vertices in order of increasing distance.
  const std::vector<VertexId>& settled() const { return settled_; }
  std::vector<VertexId> path_to(VertexId target) const;

 private:
  void touch(VertexId v) {
    if (dist_[v] == kInf && pred_[v] == kNoVertex && !settledFlag_[v]) touched_.push_back(v);
  }
  void reset() {
    for (VertexId v : touched_) {
      dist_[v] = kInf;
      pred_[v] = kNoVertex;
      settledFlag_[v] = 0;
    }
    touched_.clear();
    settled_.clear();
  }

  std::vector<double> dist_;
  std::vector<VertexId> pred_;
  std::vector<std::uint8_t> settledFlag_;
  std::vector<VertexId> touched_;
  std::vector<VertexId> settled_;
};

struct GeodesicPath {
  std::vector<Vec3> points;
  double length = 0.0;
  std::pair<VertexId, VertexId> endpointsVertexIds{kNoVertex, kNoVertex};
  bool smoothed = false;
  // Length after each accepted smoothing step, starting with the resampled input.
  std::vector<double> iterationLengths;
};

double polyline_length(std::span<const Vec3> points);

// Polyline through the given vertices.
GeodesicPath path_through(const Surface& surface, std::span<const VertexId> vertices);
// Shortest path on a graph between two vertices (graph distance).
GeodesicPath shortest_path(const Surface& surface, const Graph& graph, VertexId from, VertexId to);

// Uniform resampling along the polyline; endpoints are kept.
std::vector<Vec3> resample_polyline(std::span<const Vec3> points, double spacing);

struct SmoothingOptions {
  int maxIterations = 100;
  double relativeTolerance = 1e-6;
  double spacingFactor = 0.5;  // resampling spacing in units of epsilon0
};

// Shortens a path on the MLS surface by projected nonlinear conjugate
// gradient (Polak-Ribiere, backtracking). Endpoints stay fixed. The result is
// never longer than the input resampled and projected onto the MLS surface.
GeodesicPath smooth_path(const Surface& surface, const MlsModel& mls, const GeodesicPath& initial,
                         const SmoothingOptions& options = {});

// Nested coarsenings of the connectivity with doubling sample spacing.
struct HierarchyLevel {
  double spacing = 0.0;
  std::vector<VertexId> samples;                   // sorted vertex ids
  std::vector<std::pair<VertexId, VertexId>> edges;  // vertex ids, first < second
  std::vector<std::int32_t> slot;                  // vertex -> index into samples, or -1
  std::vector<std::vector<std::int32_t>> adjacency;  // over sample indices
  std::vector<VertexId> owner;                     // nearest sample of each vertex
};

class TopologyHierarchy {
 public:
  std::vector<HierarchyLevel> levels;

  std::size_t level_count() const { return levels.size(); }
  bool is_sample(std::size_t level, VertexId v) const { return levels[level].slot[v] >= 0; }
  // True when a and b fall into equal or adjacent sample cells on some level >= minLevel.
  bool are_neighbors(VertexId a, VertexId b, std::size_t minLevel = 1) const;
  // Samples of `level` adjacent to sample v (vertex ids).
  std::vector<VertexId> sample_neighbors(std::size_t level, VertexId v) const;
};

inline constexpr int kHierarchyLevels = 5;
inline constexpr double kHierarchyConnectFactor = 2.5;

TopologyHierarchy build_hierarchy(const Surface& surface, int levels = kHierarchyLevels);

// Binary cache keyed by the surface content hash. Returns nullopt on a miss,
// hash mismatch, or version mismatch.
void save_hierarchy(const std::filesystem::path& file, const TopologyHierarchy& h, std::uint64_t contentHash);
std::optional<TopologyHierarchy> load_hierarchy(const std::filesystem::path& file, std::uint64_t contentHash);
TopologyHierarchy build_hierarchy_cached(const Surface& surface, const std::filesystem::path& cacheDir);

}  // namespace isogrow
