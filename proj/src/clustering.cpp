#include "isogrow/clustering.hpp"

#include "isogrow/spatial_index.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>

namespace isogrow {

MapFootprint map_footprint(const PartialMap& map, const Surface& T) {
  MapFootprint fp;
  fp.inverse.assign(T.vertex_count(), kNoVertex);
  if (map.empty()) return fp;
  const PointIndex index(map.images());
  const double r = T.epsilon0() * (1.0 + 1e-9);
  for (VertexId y = 0; y < static_cast<VertexId>(T.vertex_count()); ++y) {
    const VertexId k = index.nearest_one(T.position(y));
    if ((map.images()[k] - T.position(y)).norm() <= r) fp.inverse[y] = map.domain()[k];
  }
  return fp;
}

std::optional<double> map_dissimilarity(const PartialMap& a, const MapFootprint& fa, const PartialMap& b,
                                        const MapFootprint& fb, const Surface& S) {
  double forward = 0.0;
  std::size_t shared = 0;
  for (VertexId v = 0; v < static_cast<VertexId>(a.source_vertex_count()); ++v) {
    if (!a.contains(v) || !b.contains(v)) continue;
    forward += (a.image(v) - b.image(v)).norm();
    ++shared;
  }
  if (shared < kMinOverlap) return std::nullopt;
  double backward = 0.0;
  std::size_t imaged = 0;
  for (std::size_t y = 0; y < fa.inverse.size(); ++y) {
    const VertexId xa = fa.inverse[y], xb = fb.inverse[y];
    if (xa == kNoVertex || xb == kNoVertex) continue;
    if (!a.contains(xb) || !b.contains(xa)) continue;
    backward += (S.position(xa) - S.position(xb)).norm();
    ++imaged;
  }
  if (imaged < kMinOverlap) return std::nullopt;
  return forward / static_cast<double>(shared) + backward / static_cast<double>(imaged);
}

std::optional<double> map_dissimilarity(const PartialMap& a, const PartialMap& b, const Surface& S, const Surface& T) {
  return map_dissimilarity(a, map_footprint(a, T), b, map_footprint(b, T), S);
}

std::vector<std::vector<double>> dissimilarity_matrix(const std::vector<PartialMap>& maps, const Surface& S,
                                                      const Surface& T, unsigned threads) {
  const std::size_t n = maps.size();
  std::vector<MapFootprint> fp(n);
  parallel_for(n, threads, [&](std::size_t i) { fp[i] = map_footprint(maps[i], T); });
  std::vector<std::vector<double>> D(n, std::vector<double>(n, kInf));
  parallel_for(n, threads, [&](std::size_t i) {
    D[i][i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto d = map_dissimilarity(maps[i], fp[i], maps[j], fp[j], S);
      if (d) D[i][j] = *d;
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) D[j][i] = D[i][j];
  return D;
}

std::vector<std::vector<double>> knn_weights(const std::vector<std::vector<double>>& D, int knn, double* sigmaOut) {
  const std::size_t n = D.size();
  std::vector<std::vector<std::size_t>> nn(n);
  double sigmaSum = 0.0;
  std::size_t sigmaCount = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> c;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && std::isfinite(D[i][j])) c.emplace_back(D[i][j], j);
    std::sort(c.begin(), c.end());
    if (c.size() > static_cast<std::size_t>(knn)) c.resize(knn);
    if (c.empty()) continue;
    double m = 0.0;
    for (const auto& [d, j] : c) {
      m += d;
      nn[i].push_back(j);
    }
    sigmaSum += m / static_cast<double>(c.size());
    ++sigmaCount;
  }
  const double sigma = sigmaCount > 0 ? sigmaSum / static_cast<double>(sigmaCount) : 0.0;
  if (sigmaOut) *sigmaOut = sigma;
  std::vector<std::vector<double>> W(n, std::vector<double>(n, 0.0));
  auto weight = [&](double d) {
    if (sigma > 0) return std::exp(-(d / sigma) * (d / sigma));
    return d == 0.0 ? 1.0 : 0.0;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : nn[i]) W[i][j] = W[j][i] = weight(D[i][j]);
  return W;
}

double cluster_affinity(const std::vector<std::vector<double>>& W, const std::vector<std::size_t>& a,
                        const std::vector<std::size_t>& b) {
  // Each side: sum over the other cluster's nodes of in-degree times out-degree, per squared size.
  auto side = [&](const std::vector<std::size_t>& from, const std::vector<std::size_t>& to) {
    double s = 0.0;
    for (std::size_t j : to) {
      double in = 0.0, out = 0.0;
      for (std::size_t i : from) {
        in += W[i][j];
        out += W[j][i];
      }
      s += in * out;
    }
    const double m = static_cast<double>(from.size());
    return s / (m * m);
  };
  return side(a, b) + side(b, a);
}

namespace {

double intra_affinity(const std::vector<std::vector<double>>& W, const std::vector<std::size_t>& c) {
  double s = 0.0;
  for (std::size_t x = 0; x < c.size(); ++x)
    for (std::size_t y = x + 1; y < c.size(); ++y) s += W[c[x]][c[y]];
  return s / static_cast<double>(c.size());
}

}  // namespace

ClusteringResult gdl_cluster(const std::vector<std::vector<double>>& input, const std::vector<int>& inputIds,
                             const std::vector<double>& inputAreas, const ClusteringParams& params) {
  const std::size_t n = input.size();
  if (n == 0) throw PreconditionError("clustering needs at least one map");
  if (inputIds.size() != n || inputAreas.size() != n) throw PreconditionError("ids and areas must match the matrix size");
  // Work in id order so that the result does not depend on the input order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return inputIds[x] < inputIds[y]; });
  std::vector<std::vector<double>> D(n, std::vector<double>(n));
  std::vector<int> ids(n);
  std::vector<double> areas(n);
  for (std::size_t a = 0; a < n; ++a) {
    ids[a] = inputIds[order[a]];
    areas[a] = inputAreas[order[a]];
    for (std::size_t b = 0; b < n; ++b) D[a][b] = input[order[a]][order[b]];
  }
  ClusteringResult res;
  res.weights = knn_weights(D, params.knn, &res.sigma);

  // Clusters hold sorted positions and stay ordered by their first position.
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i});
  for (;;) {
    double best = -kInf;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double A = cluster_affinity(res.weights, clusters[a], clusters[b]);
        if (A > best) {
          best = A;
          ba = a;
          bb = b;
        }
      }
    if (clusters.size() < 2 || !(best > params.rho) || !(best > 0.0)) break;
    auto& dst = clusters[ba];
    dst.insert(dst.end(), clusters[bb].begin(), clusters[bb].end());
    std::sort(dst.begin(), dst.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }

  double bestIntra = -1.0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    MapCluster mc;
    for (std::size_t i : clusters[c]) mc.memberMapIds.push_back(ids[i]);
    mc.intraAffinity = intra_affinity(res.weights, clusters[c]);
    if (mc.intraAffinity > bestIntra) {
      bestIntra = mc.intraAffinity;
      res.winner = c;
    }
    res.clusters.push_back(std::move(mc));
  }
  if (n > 1 && !(bestIntra > 0.0)) {
    // No cluster has internal support: fall back to the largest single map.
    std::size_t pick = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (areas[i] > areas[pick]) pick = i;
    for (std::size_t c = 0; c < clusters.size(); ++c)
      if (clusters[c].size() == 1 && clusters[c][0] == pick) res.winner = c;
    res.lowConfidence = true;
    spdlog::warn("clustering: no overlapping equivalent maps, using the largest map {} as the winner", ids[pick]);
  }
  return res;
}

ClusteringResult gdl_cluster(const std::vector<PartialMap>& maps, const Surface& S, const Surface& T,
                             const ClusteringParams& params, unsigned threads) {
  std::vector<int> ids;
  std::vector<double> areas;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    ids.push_back(maps[i].id >= 0 ? maps[i].id : static_cast<int>(i));
    areas.push_back(maps[i].area);
  }
  auto res = gdl_cluster(dissimilarity_matrix(maps, S, T, threads), ids, areas, params);
  for (auto& c : res.clusters) {
    std::vector<std::uint8_t> covered(S.vertex_count(), 0);
    double area = 0.0;
    for (int id : c.memberMapIds) {
      const auto it = std::find(ids.begin(), ids.end(), id);
      for (VertexId v : maps[static_cast<std::size_t>(it - ids.begin())].domain())
        if (!covered[v]) {
          covered[v] = 1;
          area += S.vertex_area(v);
        }
    }
    c.coverage = S.total_area() > 0 ? area / S.total_area() : 0.0;
  }
  return res;
}

nlohmann::json cluster_report(const ClusteringResult& result) {
  nlohmann::json j;
  j["sigma"] = result.sigma;
  j["winner"] = result.winner;
  j["lowConfidence"] = result.lowConfidence;
  j["clusters"] = nlohmann::json::array();
  for (const auto& c : result.clusters)
    j["clusters"].push_back({{"members", c.memberMapIds}, {"intraAffinity", c.intraAffinity}, {"coverage", c.coverage}});
  return j;
}

}  // namespace isogrow
