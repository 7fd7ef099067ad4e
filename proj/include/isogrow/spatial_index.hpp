#pragma once

#include "isogrow/common.hpp"

#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace isogrow {

// Static point index (R-tree) over a fixed point set. Queries are const and
// safe to issue concurrently.
class PointIndex {
 public:
  PointIndex() = default;
  explicit PointIndex(std::span<const Vec3> points);

  bool empty() const { return impl_ == nullptr; }
  std::size_t size() const { return count_; }

  // k nearest points, sorted by (distance, id).
  std::vector<std::pair<VertexId, double>> nearest(const Vec3& p, std::size_t k) const;
  // Nearest point id, or kNoVertex for an empty index.
  VertexId nearest_one(const Vec3& p) const;
  // Ids of all points within Euclidean radius r, sorted by id.
  void within(const Vec3& p, double r, std::vector<VertexId>& out) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  std::size_t count_ = 0;
};

}  // namespace isogrow
