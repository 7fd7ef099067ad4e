#pragma once

#include "isogrow/surface.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace isogrow {

inline constexpr int kContours = 10;
inline constexpr int kMinContourVertices = 10;
inline constexpr std::size_t kDistinctivenessSampleLimit = 20000;

// Deviation of geodesic isocontour lengths from planar circles at kContours
// radii evenly spaced in [rMin, rMax]: d_i = L(r_i) / (2 pi r_i) - 1.
struct Descriptor {
  std::array<double, kContours> entries{};
  std::array<bool, kContours> valid{};  // invalid entries hold -1

  bool any_valid() const;
};

std::array<double, kContours> contour_radii(double rMin, double rMax);

Descriptor fingerprint(const Surface& surface, VertexId vertex, double rMin, double rMax);
std::vector<Descriptor> compute_descriptors(const Surface& surface, double rMin, double rMax, unsigned threads = 1);

// Distances over entries valid in both descriptors.
double descriptor_l1(const Descriptor& a, const Descriptor& b);
double descriptor_l2_squared(const Descriptor& a, const Descriptor& b);

struct FeatureSet {
  std::vector<VertexId> featureVertexIds;
  std::vector<double> distinctiveness;  // F(s) per vertex
  std::vector<Descriptor> descriptors;
};

// F(s) = sum over other vertices of the L1 descriptor distance. Above
// kDistinctivenessSampleLimit vertices, the sum runs over a fixed uniform
// subsample scaled to the full count.
std::vector<double> distinctiveness(const Surface& surface, const std::vector<Descriptor>& descriptors,
                                    unsigned threads = 1);

// Features are strict local maxima of F within geodesic distance R.
FeatureSet detect_features(const Surface& surface, std::vector<Descriptor> descriptors, double R,
                           unsigned threads = 1);

// Per-vertex F as a scalar PLY property plus red-to-blue vertex colors.
void write_distinctiveness_ply(const std::filesystem::path& path, const Surface& surface,
                               const std::vector<double>& F);

}  // namespace isogrow
