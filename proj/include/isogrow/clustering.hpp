#pragma once

#include "isogrow/partial_map.hpp"
#include "isogrow/surface.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace isogrow {

inline constexpr std::size_t kMinOverlap = 10;

// Per-map lookup from T vertices back to the domain: for each T vertex, the
// domain vertex whose image is nearest, if that image lies within epsilon0 of T.
struct MapFootprint {
  std::vector<VertexId> inverse;
};

MapFootprint map_footprint(const PartialMap& map, const Surface& T);

// Mean image distance over the shared domain plus mean source distance of the
// two inverses over the shared image region. Distances are chords. Returns
// nullopt when either overlap has fewer than kMinOverlap vertices.
std::optional<double> map_dissimilarity(const PartialMap& a, const MapFootprint& fa, const PartialMap& b,
                                        const MapFootprint& fb, const Surface& S);
std::optional<double> map_dissimilarity(const PartialMap& a, const PartialMap& b, const Surface& S, const Surface& T);

// Symmetric matrix of dissimilarities, kInf for non-overlapping pairs and 0 on the diagonal.
std::vector<std::vector<double>> dissimilarity_matrix(const std::vector<PartialMap>& maps, const Surface& S,
                                                      const Surface& T, unsigned threads = 1);

struct ClusteringParams {
  double rho = 1.0;
  int knn = 4;
};

struct MapCluster {
  std::vector<int> memberMapIds;  // sorted
  double intraAffinity = 0.0;
  double coverage = 0.0;  // area fraction of S covered by the union of member domains
};

struct ClusteringResult {
  std::vector<MapCluster> clusters;  // ordered by smallest member id
  std::size_t winner = 0;
  bool lowConfidence = false;
  double sigma = 0.0;
  std::vector<std::vector<double>> weights;  // edge weights, maps in increasing id order
};

// Gaussian edge weights on the symmetrized k-nearest-neighbor graph of the
// dissimilarities, with sigma the mean of each node's finite neighbor values.
std::vector<std::vector<double>> knn_weights(const std::vector<std::vector<double>>& dissimilarity, int knn,
                                             double* sigma = nullptr);

// Degree-linkage affinity between two clusters given as input indices.
double cluster_affinity(const std::vector<std::vector<double>>& weights, const std::vector<std::size_t>& a,
                        const std::vector<std::size_t>& b);

// Agglomerative clustering on a precomputed dissimilarity matrix. ids name the
// maps for tie-breaks; areas pick the fallback winner.
ClusteringResult gdl_cluster(const std::vector<std::vector<double>>& dissimilarity, const std::vector<int>& ids,
                             const std::vector<double>& areas, const ClusteringParams& params = {});

ClusteringResult gdl_cluster(const std::vector<PartialMap>& maps, const Surface& S, const Surface& T,
                             const ClusteringParams& params = {}, unsigned threads = 1);

nlohmann::json cluster_report(const ClusteringResult& result);

}  // namespace isogrow
