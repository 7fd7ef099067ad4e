#pragma once

#include "isogrow/common.hpp"
#include "isogrow/graph.hpp"
#include "isogrow/spatial_index.hpp"

#include <array>
#include <span>
#include <vector>

namespace isogrow {

// Orthonormal frame at a surface point, right-handed: u x v = n.
struct TangentFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  Vec3 n = Vec3::UnitZ();
};

// Deterministic frame for a normal: u is +X projected into the tangent plane,
// or +Y when +X is (nearly) parallel to n.
TangentFrame frame_from_normal(const Vec3& origin, const Vec3& normal);

// Discretized surface: an oriented triangle/polygon mesh or an oriented point
// cloud with a symmetrized k-nn graph. Immutable once built.
class Surface {
 public:
  static constexpr int kDefaultKnn = 8;

  Surface() = default;

  // Polygon mesh. Missing normals are estimated from face orientation.
  static Surface from_mesh(std::vector<Vec3> vertices, std::vector<std::vector<VertexId>> faces,
                           std::vector<Vec3> normals = {});
  // Point cloud. Missing normals are estimated by local plane fits and
  // oriented along a Euclidean spanning tree rooted at the max-Z vertex.
  static Surface from_point_cloud(std::vector<Vec3> vertices, std::vector<Vec3> normals = {},
                                  int k = kDefaultKnn);

  std::size_t vertex_count() const { return vertices_.size(); }
  const Vec3& position(VertexId v) const { return vertices_[v]; }
  const Vec3& normal(VertexId v) const { return normals_[v]; }
  const std::vector<Vec3>& positions() const { return vertices_; }
  const std::vector<Vec3>& normals() const { return normals_; }

  bool is_mesh() const { return !faces_.empty(); }
  const std::vector<std::vector<VertexId>>& faces() const { return faces_; }
  // Fan triangulation of the faces.
  const std::vector<std::array<VertexId, 3>>& triangles() const { return triangles_; }
  std::span<const std::int32_t> vertex_triangles(VertexId v) const {
    return {vertexTriangles_.data() + vertexTriangleOffsets_[v],
            vertexTriangleOffsets_[v + 1] - vertexTriangleOffsets_[v]};
  }

  // Level-0 connectivity: mesh 1-rings or the symmetrized k-nn graph.
  const std::vector<std::vector<VertexId>>& adjacency() const { return adjacency_; }
  const Graph& connectivity() const { return level0_; }
  // Connectivity extended to vertices within three rings and 2.5 sample
  // spacings; used wherever a graph distance stands in for a geodesic.
  const Graph& geodesic_graph() const { return geodesicGraph_; }

  // False for isolated vertices, which are excluded from matching.
  bool active(VertexId v) const { return active_[v] != 0; }
  std::size_t active_count() const;
  const std::vector<std::uint8_t>& active_mask() const { return active_; }

  double vertex_area(VertexId v) const { return vertexArea_[v]; }
  double total_area() const { return totalArea_; }
  double epsilon0() const { return epsilon0_; }
  double diameter() const { return diameter_; }

  const PointIndex& index() const { return index_; }

  // Content hash over positions, normals and connectivity.
  std::uint64_t content_hash() const;

 private:
  void finalize();

  std::vector<Vec3> vertices_;
  std::vector<Vec3> normals_;
  std::vector<std::vector<VertexId>> faces_;
  std::vector<std::array<VertexId, 3>> triangles_;
  std::vector<std::size_t> vertexTriangleOffsets_;
  std::vector<std::int32_t> vertexTriangles_;
  std::vector<std::vector<VertexId>> adjacency_;
  Graph level0_;
  Graph geodesicGraph_;
  std::vector<std::uint8_t> active_;
  std::vector<double> vertexArea_;
  double totalArea_ = 0.0;
  double epsilon0_ = 0.0;
  double diameter_ = 0.0;
  PointIndex index_;
};

struct SurfaceStats {
  double epsilon0 = 0.0;
  double diameter = 0.0;
  double R = 0.0;  // descriptor radius unit, 5% of the diameter
};

SurfaceStats surface_stats(const Surface& surface);

TangentFrame tangent_frame(const Surface& surface, VertexId vertex);

// Max pairwise distance over a farthest-point sample of at most `sampleSize`
// points; exact when the surface has no more vertices than that.
double estimate_diameter(std::span<const Vec3> points, std::size_t sampleSize = 100);

// Moving-least-squares surface derived from a Surface's oriented vertices.
struct MlsModel {
  explicit MlsModel(const Surface& surface);
  MlsModel(const Surface& surface, double bandwidth, int maxIterations, double tolerance);

  const Surface* source = nullptr;
  double kernelBandwidth = 0.0;
  int maxProjectionIterations = 20;
  double projectionTolerance = 0.0;
};

struct Projection {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  int iterations = 0;
  bool converged = false;
  // Non-convergence: the point was projected onto the closest vertex's tangent plane.
  bool fallback = false;
};

// Projects p onto the MLS surface. Throws OutOfBandError when no vertex lies
// within 10 kernel bandwidths of p.
Projection mls_project(const MlsModel& model, const Vec3& p);

// Distance between p and its one-step foot point on the local fit around p;
// zero exactly on the MLS surface.
double mls_residual(const MlsModel& model, const Vec3& p);

}  // namespace isogrow
