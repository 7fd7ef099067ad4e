#include "isogrow/seeding.hpp"

#include "isogrow/mesh_io.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace isogrow {

std::vector<FeatureMatch> candidate_matches(const FeatureSet& featS, const FeatureSet& featT,
                                            const SeedingParams& params) {
  std::vector<FeatureMatch> out;
  if (featS.featureVertexIds.empty() || featT.featureVertexIds.empty()) {
    spdlog::warn("candidate_matches: {} source and {} target features, no matches", featS.featureVertexIds.size(),
                 featT.featureVertexIds.size());
    return out;
  }
  const double maxF = *std::max_element(featS.distinctiveness.begin(), featS.distinctiveness.end());
  for (VertexId s : featS.featureVertexIds) {
    const Descriptor& ds = featS.descriptors[s];
    std::vector<std::pair<double, VertexId>> near;
    for (VertexId t : featT.featureVertexIds) near.emplace_back(descriptor_l2_squared(ds, featT.descriptors[t]), t);
    const std::size_t k = std::min<std::size_t>(params.K, near.size());
    std::partial_sort(near.begin(), near.begin() + k, near.end());
    const double Fs = featS.distinctiveness[s];
    const double logTerm = Fs > 0 && maxF > 0 ? -std::log(Fs / maxF) : kInf;
    for (std::size_t i = 0; i < k; ++i) out.push_back({s, near[i].second, logTerm + params.omegaD * near[i].first});
  }
  std::sort(out.begin(), out.end(), [](const FeatureMatch& a, const FeatureMatch& b) {
    if (a.deltaInit != b.deltaInit) return a.deltaInit < b.deltaInit;
    if (a.s != b.s) return a.s < b.s;
    return a.t < b.t;
  });
  return out;
}

FeatureDistances::FeatureDistances(const Surface& surface, std::vector<VertexId> features, unsigned threads)
    : features_(std::move(features)), slot_(surface.vertex_count(), -1) {
  std::sort(features_.begin(), features_.end());
  features_.erase(std::unique(features_.begin(), features_.end()), features_.end());
  for (std::size_t k = 0; k < features_.size(); ++k) slot_[features_[k]] = static_cast<std::int32_t>(k);
  const std::size_t m = features_.size();
  table_.assign(m * m, kInf);
  parallel_for(m, threads, [&](std::size_t i) {
    const auto r = dijkstra(surface.geodesic_graph(), features_[i]);
    for (std::size_t j = 0; j < m; ++j) table_[i * m + j] = r.distance[features_[j]];
  });
  // Symmetrize against summation-order differences.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) table_[i * m + j] = table_[j * m + i] = std::min(table_[i * m + j], table_[j * m + i]);
}

double FeatureDistances::operator()(VertexId a, VertexId b) const {
  const auto i = slot_.at(a), j = slot_.at(b);
  if (i < 0 || j < 0) throw PreconditionError("FeatureDistances queried for a non-feature vertex");
  return table_[static_cast<std::size_t>(i) * features_.size() + j];
}

ClusterContext make_cluster_context(const Surface& S, const TopologyHierarchy& hierS, const FeatureDistances& distS,
                                    const FeatureDistances& distT) {
  ClusterContext ctx;
  ctx.distS = [&distS](VertexId a, VertexId b) { return distS(a, b); };
  ctx.distT = [&distT](VertexId a, VertexId b) { return distT(a, b); };
  ctx.neighborsS = [&hierS](VertexId a, VertexId b) { return hierS.are_neighbors(a, b, 1); };
  ctx.omegaC = 1.0 / (8.0 * S.epsilon0() * S.epsilon0());
  return ctx;
}

double cluster_score(const MatchCluster& cluster, const FeatureMatch& candidate, const ClusterContext& ctx) {
  double stretch = 0.0;
  for (const auto& m : cluster.members) {
    const double d = ctx.distS(m.s, candidate.s) - ctx.distT(m.t, candidate.t);
    stretch += d * d;
  }
  return candidate.deltaInit + ctx.omegaC * stretch;
}

namespace {
bool match_less(const FeatureMatch& a, const FeatureMatch& b) {
  if (a.deltaInit != b.deltaInit) return a.deltaInit < b.deltaInit;
  if (a.s != b.s) return a.s < b.s;
  return a.t < b.t;
}
}  // namespace

std::vector<MatchCluster> grow_match_clusters(const std::vector<FeatureMatch>& input, const ClusterContext& ctx,
                                              const SeedingParams& params) {
  std::vector<FeatureMatch> matches = input;
  std::sort(matches.begin(), matches.end(), match_less);
  std::vector<std::uint8_t> consumed(matches.size(), 0);
  std::vector<MatchCluster> clusters;
  std::size_t total = 0;
  while (total <= matches.size()) {
    std::size_t seed = matches.size();
    for (std::size_t i = 0; i < matches.size(); ++i)
      if (!consumed[i] && matches[i].deltaInit <= params.clusterThreshold) {
        seed = i;
        break;
      }
    if (seed == matches.size()) break;
    MatchCluster c;
    std::vector<std::uint8_t> member(matches.size(), 0);
    c.members.push_back(matches[seed]);
    c.scores.push_back(matches[seed].deltaInit);
    member[seed] = consumed[seed] = 1;
    for (;;) {
      std::size_t best = matches.size();
      double bestScore = kInf;
      for (std::size_t j = 0; j < matches.size(); ++j) {
        if (member[j]) continue;
        const auto& cand = matches[j];
        bool clash = false, adjacent = false;
        for (const auto& m : c.members) {
          if (m.s == cand.s || m.t == cand.t) clash = true;
          if (!adjacent && ctx.neighborsS(m.s, cand.s)) adjacent = true;
        }
        if (clash || !adjacent) continue;
        const double score = cluster_score(c, cand, ctx);
        // matches are sorted, so a strict comparison keeps the (deltaInit, s, t) tie-break.
        if (score < bestScore) {
          bestScore = score;
          best = j;
        }
      }
      if (best == matches.size() || bestScore > params.clusterThreshold) break;
      c.members.push_back(matches[best]);
      c.scores.push_back(bestScore);
      member[best] = consumed[best] = 1;
    }
    total += c.members.size();
    clusters.push_back(std::move(c));
  }
  return clusters;
}

Vec3 initial_tangent(const GeodesicPath& path, const Vec3& normal) {
  if (path.points.size() < 2) return Vec3::Zero();
  const Vec3& p0 = path.points.front();
  // First point about one sample spacing away, or the far end of short paths.
  Vec3 d = path.points.back() - p0;
  double travelled = 0.0;
  for (std::size_t i = 1; i < path.points.size(); ++i) {
    travelled += (path.points[i] - path.points[i - 1]).norm();
    if (travelled >= 0.1 * path.length || i + 1 == path.points.size()) {
      d = path.points[i] - p0;
      break;
    }
  }
  d -= d.dot(normal) * normal;
  const double len = d.norm();
  return len > 0 ? Vec3(d / len) : Vec3::Zero();
}

SeedQueue::SeedQueue(const Surface& S, const MlsModel& mlsS, const Surface& T, const MlsModel& mlsT,
                     std::vector<MatchCluster> clusters, ClusterContext ctx, const SeedingParams& params)
    : S_(S), mlsS_(mlsS), T_(T), mlsT_(mlsT), clusters_(std::move(clusters)), ctx_(std::move(ctx)), params_(params) {
  std::map<std::pair<VertexId, VertexId>, std::pair<double, std::size_t>> best;
  for (std::size_t c = 0; c < clusters_.size(); ++c) {
    for (std::size_t k = 0; k < clusters_[c].members.size(); ++k) {
      const auto key = std::make_pair(clusters_[c].members[k].s, clusters_[c].members[k].t);
      const double p = clusters_[c].scores[k];
      auto it = best.find(key);
      if (it == best.end() || p < it->second.first) best[key] = {p, c};
    }
  }
  for (const auto& [key, val] : best) heap_.push({val.first, key.first, key.second, val.second});
}

bool SeedQueue::is_redundant(const PartialMap& map, VertexId s, const Vec3& t, double radius) {
  return s >= 0 && static_cast<std::size_t>(s) < map.source_vertex_count() && map.contains(s) &&
         (map.image(s) - t).norm() <= radius;
}

std::optional<OrientedPointMatch> SeedQueue::next(const std::vector<PartialMap>& grown) {
  const double radius = params_.redundancyFactor * T_.epsilon0();
  while (!heap_.empty() && emitted_ < params_.maxSeeds) {
    const Entry e = heap_.top();
    heap_.pop();
    if (!std::isfinite(e.priority)) break;
    const Vec3 tPos = T_.position(e.t);
    bool redundant = false;
    for (const auto& m : grown)
      if (is_redundant(m, e.s, tPos, radius)) {
        redundant = true;
        break;
      }
    if (redundant) continue;

    const MatchCluster& c = clusters_[e.cluster];
    const FeatureMatch* partner = nullptr;
    double bestGap = kInf;
    for (const auto& m : c.members) {
      if (m.s == e.s || m.t == e.t) continue;
      const double gap = std::abs(ctx_.distS(e.s, m.s) - ctx_.distT(e.t, m.t));
      if (gap < bestGap || (gap == bestGap && partner && std::make_pair(m.s, m.t) < std::make_pair(partner->s, partner->t))) {
        bestGap = gap;
        partner = &m;
      }
    }
    if (!partner) {
      spdlog::debug("seed ({}, {}) skipped: no orientation partner in its cluster", e.s, e.t);
      ++skipped_;
      continue;
    }
    const auto pathS = smooth_path(S_, mlsS_, shortest_path(S_, S_.geodesic_graph(), e.s, partner->s));
    const auto pathT = smooth_path(T_, mlsT_, shortest_path(T_, T_.geodesic_graph(), e.t, partner->t));
    OrientedPointMatch seed;
    seed.s = S_.position(e.s);
    seed.t = tPos;
    seed.sVertex = e.s;
    seed.tVertex = e.t;
    seed.ds = initial_tangent(pathS, S_.normal(e.s));
    seed.dt = initial_tangent(pathT, T_.normal(e.t));
    seed.priority = e.priority;
    if (seed.ds.norm() == 0.0 || seed.dt.norm() == 0.0) {
      spdlog::debug("seed ({}, {}) skipped: degenerate orientation path", e.s, e.t);
      ++skipped_;
      continue;
    }
    ++emitted_;
    return seed;
  }
  return std::nullopt;
}

std::vector<OrientedPointMatch> read_seed_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open seed file " + path.string());
  std::vector<OrientedPointMatch> seeds;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double v[12];
    for (double& x : v)
      if (!(ss >> x)) throw FormatError(path.string(), lineNo, "expected 12 numbers per seed");
    OrientedPointMatch m;
    m.s = Vec3(v[0], v[1], v[2]);
    m.ds = Vec3(v[3], v[4], v[5]);
    m.t = Vec3(v[6], v[7], v[8]);
    m.dt = Vec3(v[9], v[10], v[11]);
    if (m.ds.norm() == 0.0 || m.dt.norm() == 0.0) throw FormatError(path.string(), lineNo, "zero seed direction");
    m.priority = static_cast<double>(seeds.size());
    seeds.push_back(m);
  }
  return seeds;
}

void write_seed_file(const std::filesystem::path& path, const std::vector<OrientedPointMatch>& seeds) {
  std::ofstream o(path);
  if (!o) throw Error("cannot write seed file " + path.string());
  for (const auto& m : seeds) {
    const Vec3* parts[4] = {&m.s, &m.ds, &m.t, &m.dt};
    bool first = true;
    for (const Vec3* p : parts)
      for (int c = 0; c < 3; ++c) {
        o << (first ? "" : " ") << format_double((*p)[c]);
        first = false;
      }
    o << '\n';
  }
}

}  // namespace isogrow
