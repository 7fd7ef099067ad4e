#pragma once

#include "isogrow/partial_map.hpp"
#include "isogrow/surface.hpp"

#include <span>
#include <vector>

namespace isogrow {

struct MergeParams {
  double lambdaDsFactor = 0.2;  // lambda = lambdaDsFactor / epsilon1
  double conflictFactor = 10.0;  // keep images within this many epsilon0 of T of the heaviest
};

struct FinalCorrespondence {
  std::vector<Vec3> image;
  std::vector<double> weightMass;  // 0 for unmatched vertices
  std::vector<int> contributors;   // 0 for unmatched vertices
  double coverage = 0.0;           // fraction of S vertices matched
  std::size_t conflicts = 0;       // vertices where some contributions were dropped

  std::size_t size() const { return image.size(); }
  bool matched(VertexId v) const { return contributors[v] > 0; }
  std::size_t matched_count() const;
};

// Weight of a contribution at within-domain seed distance d.
double merge_weight(double seedDistance, double epsilon1, const MergeParams& params = {});

// Weighted Riemannian mean on T of the member images at each vertex of the union of domains.
FinalCorrespondence merge_maps(std::span<const PartialMap* const> members, const Surface& S, const Surface& T,
                               const MlsModel& mlsT, double epsilon1, const MergeParams& params = {},
                               unsigned threads = 1);

// The correspondence as a one-map cluster, with zero seed distances.
PartialMap as_partial_map(const FinalCorrespondence& c);

}  // namespace isogrow
