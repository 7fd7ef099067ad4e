#pragma once

#include "isogrow/mesh_io.hpp"
#include "isogrow/partial_map.hpp"
#include "isogrow/surface.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace isogrow {

enum class SyntheticKind { plane, plane_peaks, plane_hill, sphere, cylinder, plane_hole };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

// Bump parameters of the plane_peaks and plane_hill targets.
inline constexpr double kPeakHeight = 0.3;
inline constexpr double kPeakWidth = 0.08;
inline constexpr double kPeakCenters[3][2] = {{0.25, 0.25}, {0.75, 0.35}, {0.4, 0.75}};
inline constexpr double kHillHeight = 0.3;
inline constexpr double kHillWidth = 0.15;
inline constexpr double kMaskHeight = 0.01;
inline constexpr double kHoleRadius = 0.2;
inline constexpr double kCylinderRadius = 1.0;
inline constexpr double kCylinderHeight = 2.0;

// Height of the three-peak field at (x, y).
double peaks_height(double x, double y);
double hill_height(double x, double y);

// Vertex pair with its analytic geodesic distance, for oracle checks.
struct RecordedGeodesic {
  VertexId a = kNoVertex;
  VertexId b = kNoVertex;
  double length = 0.0;
};

struct SyntheticPair {
  SyntheticKind kind = SyntheticKind::plane;
  RawSurface sourceMesh;
  RawSurface targetMesh;
  Surface S;
  Surface T;
  // Per S-vertex image on T, valid where hasTruth is set.
  std::vector<Vec3> groundTruth;
  std::vector<std::uint8_t> hasTruth;
  std::vector<std::uint8_t> isometricMask;
  std::vector<RecordedGeodesic> geodesics;  // on S
};

struct SyntheticOptions {
  double noise = 0.0;  // Gaussian vertex jitter (standard deviation)
  std::uint64_t seed = 1;
};

// resolution: grid size N (N x N plane grid; sphere picks the icosphere level
// with vertex count closest to N^2; cylinder uses nz = N rows).
SyntheticPair generate_synthetic(SyntheticKind kind, int resolution, const SyntheticOptions& options = {});

RawSurface plane_grid(int n);
RawSurface icosphere(int subdivisions);
RawSurface cylinder_grid(int nTheta, int nz, double radius, double height);

// Great-circle distance between two points on the sphere of given radius.
double sphere_geodesic(const Vec3& a, const Vec3& b, double radius = 1.0);
// Shortest helix length on the cylinder between (theta0, z0) and (theta1, z1).
double cylinder_geodesic(double theta0, double z0, double theta1, double z1, double radius = kCylinderRadius);

// Oriented seeds read off the ground truth at `count` well-spread vertices of
// the isometric region, farthest-point sampled from the one nearest its centroid.
std::vector<OrientedPointMatch> truth_seeds(const SyntheticPair& pair, int count);

// Writes S.obj, T.obj, seeds.txt (eight truth seeds), truth.txt (srcIndex tx ty tz) and mask.txt (srcIndex flag).
void write_synthetic(const SyntheticPair& pair, const std::filesystem::path& dir);

struct GroundTruth {
  std::vector<Vec3> image;
  std::vector<std::uint8_t> has;
};

GroundTruth read_ground_truth(const std::filesystem::path& path, std::size_t sourceVertexCount);
void write_ground_truth(const std::filesystem::path& path, const std::vector<Vec3>& image,
                        const std::vector<std::uint8_t>& has);

}  // namespace isogrow
