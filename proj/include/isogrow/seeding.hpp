#pragma once

#include "isogrow/descriptors.hpp"
#include "isogrow/geodesics.hpp"
#include "isogrow/partial_map.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <vector>

namespace isogrow {

struct SeedingParams {
  int K = 10;
  double omegaD = 400.0;
  double clusterThreshold = 11.5;
  int maxSeeds = 200;
  double redundancyFactor = 2.0;  // redundancy radius in units of epsilon0 of T
};

struct FeatureMatch {
  VertexId s = kNoVertex;
  VertexId t = kNoVertex;
  double deltaInit = 0.0;
};

struct MatchCluster {
  std::vector<FeatureMatch> members;
  std::vector<double> scores;  // score of each member when it was added
};

// For every feature s of S, its K nearest features of T in descriptor space,
// scored -log(F(s)/max F) + omegaD * |D(s) - D(t)|^2. Sorted by (score, s, t).
std::vector<FeatureMatch> candidate_matches(const FeatureSet& featS, const FeatureSet& featT,
                                            const SeedingParams& params = {});

// Geodesic distances between feature vertices, from one Dijkstra per feature
// over the surface's geodesic graph.
class FeatureDistances {
 public:
  FeatureDistances() = default;
  FeatureDistances(const Surface& surface, std::vector<VertexId> features, unsigned threads = 1);
  double operator()(VertexId a, VertexId b) const;

 private:
  std::vector<VertexId> features_;
  std::vector<std::int32_t> slot_;
  std::vector<double> table_;
};

struct ClusterContext {
  std::function<double(VertexId, VertexId)> distS;
  std::function<double(VertexId, VertexId)> distT;
  std::function<bool(VertexId, VertexId)> neighborsS;  // hierarchy neighborhood on S
  double omegaC = 0.0;
};

ClusterContext make_cluster_context(const Surface& S, const TopologyHierarchy& hierS, const FeatureDistances& distS,
                                    const FeatureDistances& distT);

// score of adding (s', t') to a cluster: deltaInit + omegaC * sum of squared
// distance discrepancies to the members.
double cluster_score(const MatchCluster& cluster, const FeatureMatch& candidate, const ClusterContext& ctx);

std::vector<MatchCluster> grow_match_clusters(const std::vector<FeatureMatch>& matches, const ClusterContext& ctx,
                                              const SeedingParams& params = {});

// Direction of a smoothed path at its start, in the tangent plane of `normal`.
Vec3 initial_tangent(const GeodesicPath& path, const Vec3& normal);

// Min-priority stream of oriented seeds drawn from the match clusters.
class SeedQueue {
 public:
  SeedQueue(const Surface& S, const MlsModel& mlsS, const Surface& T, const MlsModel& mlsT,
            std::vector<MatchCluster> clusters, ClusterContext ctx, const SeedingParams& params = {});

  // Next non-redundant seed, or nullopt once exhausted or capped.
  std::optional<OrientedPointMatch> next(const std::vector<PartialMap>& grown);
  int emitted() const { return emitted_; }
  int skipped() const { return skipped_; }

  // Seeds whose (s, t) already lie in a grown map: s in U and |f(s) - t| <= radius.
  static bool is_redundant(const PartialMap& map, VertexId s, const Vec3& t, double radius);

 private:
  struct Entry {
    double priority;
    VertexId s, t;
    std::size_t cluster;
    bool operator>(const Entry& o) const {
      if (priority != o.priority) return priority > o.priority;
      if (s != o.s) return s > o.s;
      return t > o.t;
    }
  };

  const Surface& S_;
  const MlsModel& mlsS_;
  const Surface& T_;
  const MlsModel& mlsT_;
  std::vector<MatchCluster> clusters_;
  ClusterContext ctx_;
  SeedingParams params_;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap_;
  int emitted_ = 0;
  int skipped_ = 0;
};

// Externally supplied seeds: `sx sy sz dsx dsy dsz tx ty tz dtx dty dtz` per line.
std::vector<OrientedPointMatch> read_seed_file(const std::filesystem::path& path);
void write_seed_file(const std::filesystem::path& path, const std::vector<OrientedPointMatch>& seeds);

}  // namespace isogrow
