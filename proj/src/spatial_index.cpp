#include "isogrow/spatial_index.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <boost/iterator/function_output_iterator.hpp>

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace isogrow {

namespace {
using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using BBox = bg::model::box<BPoint>;
using Entry = std::pair<BPoint, VertexId>;

BPoint to_bpoint(const Vec3& p) { return BPoint(p.x(), p.y(), p.z()); }
}  // namespace

struct PointIndex::Impl {
  bgi::rtree<Entry, bgi::quadratic<16>> tree;
  std::vector<Vec3> points;
};

PointIndex::PointIndex(std::span<const Vec3> points) : count_(points.size()) {
  if (points.empty()) return;
  auto impl = std::make_shared<Impl>();
  impl->points.assign(points.begin(), points.end());
  std::vector<Entry> entries;
  entries.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) entries.emplace_back(to_bpoint(points[i]), static_cast<VertexId>(i));
  impl->tree = bgi::rtree<Entry, bgi::quadratic<16>>(entries.begin(), entries.end());
  impl_ = std::move(impl);
}

std::vector<std::pair<VertexId, double>> PointIndex::nearest(const Vec3& p, std::size_t k) const {
  std::vector<std::pair<VertexId, double>> out;
  if (!impl_ || k == 0) return out;
  // Over-fetch so ties at the k-th distance are resolved by id, not by tree order.
  const std::size_t fetch = std::min(count_, k + 4);
  std::vector<Entry> hits;
  hits.reserve(fetch);
  impl_->tree.query(bgi::nearest(to_bpoint(p), static_cast<unsigned>(fetch)), std::back_inserter(hits));
  out.reserve(hits.size());
  for (const auto& h : hits) out.emplace_back(h.second, (impl_->points[h.second] - p).norm());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second < b.second || (a.second == b.second && a.first < b.first);
  });
  if (out.size() > k) out.resize(k);
  return out;
}

VertexId PointIndex::nearest_one(const Vec3& p) const {
  auto r = nearest(p, 1);
  return r.empty() ? kNoVertex : r.front().first;
}

void PointIndex::within(const Vec3& p, double r, std::vector<VertexId>& out) const {
  out.clear();
  if (!impl_) return;
  const BBox box(BPoint(p.x() - r, p.y() - r, p.z() - r), BPoint(p.x() + r, p.y() + r, p.z() + r));
  const double r2 = r * r;
  const auto& pts = impl_->points;
  impl_->tree.query(bgi::intersects(box), boost::make_function_output_iterator([&](const Entry& e) {
                      if ((pts[e.second] - p).squaredNorm() <= r2) out.push_back(e.second);
                    }));
  std::sort(out.begin(), out.end());
}

}  // namespace isogrow
