#pragma once

#include "isogrow/geodesics.hpp"
#include "isogrow/partial_map.hpp"

#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

namespace isogrow {

// Transports a tangent vector along a polyline on the MLS surface by
// repeated projection onto the tangent planes of consecutive points, in
// steps of at most stepFactor * epsilon0. Throws Error on MLS failure.
Vec3 parallel_transport(const Surface& surface, const MlsModel& mls, const GeodesicPath& path, const Vec3& direction,
                        double stepFactor = 0.25);

// The composed projections of parallel_transport as one linear map, scaled
// arbitrarily; applying it and normalizing transports any start direction.
Mat3 transport_operator(const Surface& surface, const MlsModel& mls, const GeodesicPath& path,
                        double stepFactor = 0.25);

struct SurfaceWalk {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 direction = Vec3::UnitX();  // walking direction at the end
  Vec3 carried = Vec3::UnitX();    // transported companion vector
};

// Straightest walk of the given length from `start` along `direction`,
// transporting `carried` alongside. Throws Error on MLS failure.
SurfaceWalk walk_on_surface(const MlsModel& mls, const Vec3& start, const Vec3& direction, double length,
                            const Vec3& carried, double step);

// Local minimizer of sum w_i dist(y, p_i)^2 on the MLS surface. Throws
// PreconditionError when no weight is positive or the points spread over
// more than spreadFactor * epsilon0.
Vec3 riemannian_mean(const Surface& surface, const MlsModel& mls, std::span<const Vec3> points,
                     std::span<const double> weights, double spreadFactor = 10.0);

struct GrowingParams {
  double nuFactor = 0.5;             // nu = nuFactor * epsilon0 of S
  int maxSources = 0;                // cap on transported neighbors per candidate, 0 for all
  double neighborhoodFactor = 2.5;   // level-1 neighborhood radius, in units of eps_1
  bool optimize = true;
  int optimizeIterations = 15;
  int maxRejections = 5;
  double transportStepFactor = 0.25;
  double spreadFactor = 10.0;
  bool recordLog = false;
};

// Smoothed S-side path data between a matched vertex and a candidate.
struct SourcePath {
  Vec3 tangent = Vec3::Zero();    // unit direction of the path at its start
  double length = 0.0;
  Mat3 transport = Mat3::Zero();  // transport_operator along the path
  bool ok = false;
};

// Everything about the pair (S, T) shared by all seeds. The S-side path
// cache is filled lazily and is safe to use from concurrent growers.
class GrowContext {
 public:
  GrowContext(const Surface& S, const MlsModel& mlsS, const TopologyHierarchy& hierS, const Surface& T,
              const MlsModel& mlsT);

  const Surface& S;
  const MlsModel& mlsS;
  const TopologyHierarchy& hierS;
  const Surface& T;
  const MlsModel& mlsT;

  // Path from `from` to `to` along the given vertex chain, smoothed and cached.
  SourcePath source_path(VertexId from, VertexId to, std::span<const VertexId> chain, double stepFactor) const;
  std::size_t cached_paths() const;

 private:
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, SourcePath> cache_;
};

struct GrowEvent {
  VertexId vertex = kNoVertex;
  bool accepted = false;
  double stretch = 0.0;  // largest gate violation candidate value
};

struct OptimizeReport {
  std::vector<double> objective;  // value before the first and after each accepted step
  int iterations = 0;
  int rejections = 0;
};

struct GrowReport {
  std::vector<GrowEvent> events;
  std::vector<OptimizeReport> optimizations;
  std::size_t evicted = 0;
};

PartialMap grow_region(const OrientedPointMatch& seed, const GrowContext& ctx, const GrowingParams& params = {},
                       GrowReport* report = nullptr);

// Sum over hierarchy edges inside U (all levels, connecting path inside U) of
// (dist_f(U)(f(x), f(y)) - dist_U(x, y))^2, with both distances measured by
// Dijkstra restricted to U: on S with Euclidean edge weights, on the image
// with image-chord weights over the same edges.
double metric_objective(const PartialMap& map, const GrowContext& ctx);

// Gauss-Newton on tangent-plane displacements of all images except the seed's.
OptimizeReport optimize_metric(PartialMap& map, const GrowContext& ctx, const GrowingParams& params = {});

struct StretchViolation {
  VertexId x = kNoVertex;
  VertexId y = kNoVertex;
  double domainDistance = 0.0;
  double imageDistance = 0.0;
};

// Hierarchy edges of one level inside U whose restricted distances differ by more than nu.
std::vector<StretchViolation> stretch_violations(const PartialMap& map, const GrowContext& ctx, double nu,
                                                std::size_t level = 1);

// Recomputes seedDistances by Dijkstra restricted to U from the seed vertex.
void update_seed_distances(PartialMap& map, const GrowContext& ctx);

}  // namespace isogrow
