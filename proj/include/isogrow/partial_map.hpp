#pragma once

#include "isogrow/common.hpp"

#include <vector>

namespace isogrow {

// Seed point and tangent direction on S with their counterparts on T.
struct OrientedPointMatch {
  Vec3 s = Vec3::Zero();
  Vec3 ds = Vec3::UnitX();
  Vec3 t = Vec3::Zero();
  Vec3 dt = Vec3::UnitX();
  VertexId sVertex = kNoVertex;  // feature vertices when the seed came from matching
  VertexId tVertex = kNoVertex;
  double priority = 0.0;
};

// Domain U on S with per-vertex images on T, stored compactly in insertion
// order with a dense vertex -> slot lookup.
class PartialMap {
 public:
  PartialMap() = default;
  explicit PartialMap(std::size_t sourceVertexCount) : slot_(sourceVertexCount, -1) {}

  int id = -1;
  OrientedPointMatch seed;
  VertexId seedVertex = kNoVertex;
  double area = 0.0;

  std::size_t size() const { return domain_.size(); }
  bool empty() const { return domain_.empty(); }
  std::size_t source_vertex_count() const { return slot_.size(); }
  bool contains(VertexId v) const { return slot_[v] >= 0; }
  std::int32_t slot(VertexId v) const { return slot_[v]; }

  const std::vector<VertexId>& domain() const { return domain_; }
  const Vec3& image(VertexId v) const { return image_[slot_[v]]; }
  const Vec3& source_direction(VertexId v) const { return ds_[slot_[v]]; }
  const Vec3& target_direction(VertexId v) const { return dt_[slot_[v]]; }
  double seed_distance(VertexId v) const { return seedDistance_[slot_[v]]; }

  // Per-slot access, parallel to domain().
  const std::vector<Vec3>& images() const { return image_; }
  const std::vector<double>& seed_distances() const { return seedDistance_; }

  void add(VertexId v, const Vec3& image, const Vec3& ds, const Vec3& dt, double seedDistance) {
    slot_[v] = static_cast<std::int32_t>(domain_.size());
    domain_.push_back(v);
    image_.push_back(image);
    ds_.push_back(ds);
    dt_.push_back(dt);
    seedDistance_.push_back(seedDistance);
  }
  void set_image(VertexId v, const Vec3& image) { image_[slot_[v]] = image; }
  void set_target_direction(VertexId v, const Vec3& dt) { dt_[slot_[v]] = dt; }
  void set_seed_distance(VertexId v, double d) { seedDistance_[slot_[v]] = d; }

  // Removes the given vertices, keeping the insertion order of the rest.
  void remove(const std::vector<VertexId>& vertices) {
    for (VertexId v : vertices)
      if (slot_[v] >= 0) slot_[v] = -2;
    std::size_t w = 0;
    for (std::size_t k = 0; k < domain_.size(); ++k) {
      const VertexId v = domain_[k];
      if (slot_[v] == -2) {
        slot_[v] = -1;
        continue;
      }
      domain_[w] = v;
      image_[w] = image_[k];
      ds_[w] = ds_[k];
      dt_[w] = dt_[k];
      seedDistance_[w] = seedDistance_[k];
      slot_[v] = static_cast<std::int32_t>(w);
      ++w;
    }
    domain_.resize(w);
    image_.resize(w);
    ds_.resize(w);
    dt_.resize(w);
    seedDistance_.resize(w);
  }

 private:
  std::vector<std::int32_t> slot_;
  std::vector<VertexId> domain_;
  std::vector<Vec3> image_;
  std::vector<Vec3> ds_;
  std::vector<Vec3> dt_;
  std::vector<double> seedDistance_;
};

}  // namespace isogrow
