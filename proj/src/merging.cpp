#include "isogrow/merging.hpp"

#include "isogrow/growing.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace isogrow {

std::size_t FinalCorrespondence::matched_count() const {
  std::size_t n = 0;
  for (int c : contributors) n += c > 0;
  return n;
}

double merge_weight(double seedDistance, double epsilon1, const MergeParams& params) {
  return std::exp(-params.lambdaDsFactor / epsilon1 * seedDistance);
}

FinalCorrespondence merge_maps(std::span<const PartialMap* const> members, const Surface& S, const Surface& T,
                               const MlsModel& mlsT, double epsilon1, const MergeParams& params, unsigned threads) {
  if (members.empty()) throw PreconditionError("merge_maps needs at least one map");
  if (!(epsilon1 > 0)) throw PreconditionError("merge_maps needs a positive epsilon1");
  const std::size_t n = S.vertex_count();
  FinalCorrespondence out;
  out.image.assign(n, Vec3::Zero());
  out.weightMass.assign(n, 0.0);
  out.contributors.assign(n, 0);
  std::vector<std::uint8_t> conflict(n, 0);
  const double bound = params.conflictFactor * T.epsilon0();
  parallel_for(n, threads, [&](std::size_t i) {
    const VertexId v = static_cast<VertexId>(i);
    std::vector<Vec3> pts;
    std::vector<double> ws;
    for (const PartialMap* m : members)
      if (m->contains(v)) {
        pts.push_back(m->image(v));
        ws.push_back(merge_weight(m->seed_distance(v), epsilon1, params));
      }
    if (pts.empty()) return;
    std::size_t heaviest = 0;
    for (std::size_t k = 1; k < pts.size(); ++k)
      if (ws[k] > ws[heaviest]) heaviest = k;
    std::vector<Vec3> keptP;
    std::vector<double> keptW;
    for (std::size_t k = 0; k < pts.size(); ++k)
      if ((pts[k] - pts[heaviest]).norm() <= bound) {
        keptP.push_back(pts[k]);
        keptW.push_back(ws[k]);
      }
    if (keptP.size() < pts.size()) conflict[i] = 1;
    double mass = 0.0;
    for (double w : keptW) mass += w;
    Vec3 y = pts[heaviest];
    if (keptP.size() > 1) {
      try {
        // Kept images lie within bound of the heaviest, so pairwise within twice that.
        y = riemannian_mean(T, mlsT, keptP, keptW, 2.0 * params.conflictFactor);
      } catch (const Error& e) {
        spdlog::debug("merge at vertex {} kept the heaviest image: {}", v, e.what());
      }
    }
    out.image[i] = y;
    out.weightMass[i] = mass;
    out.contributors[i] = static_cast<int>(keptP.size());
  });
  for (std::size_t i = 0; i < n; ++i) out.conflicts += conflict[i];
  if (out.conflicts > 0) spdlog::info("merge: {} vertices dropped conflicting contributions", out.conflicts);
  out.coverage = n > 0 ? static_cast<double>(out.matched_count()) / static_cast<double>(n) : 0.0;
  return out;
}

PartialMap as_partial_map(const FinalCorrespondence& c) {
  PartialMap m(c.size());
  for (VertexId v = 0; v < static_cast<VertexId>(c.size()); ++v)
    if (c.matched(v)) m.add(v, c.image[v], Vec3::UnitX(), Vec3::UnitX(), 0.0);
  return m;
}

}  // namespace isogrow
