#include "isogrow/surface.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>
#include <queue>
#include <set>

namespace isogrow {

TangentFrame frame_from_normal(const Vec3& origin, const Vec3& normal) {
  TangentFrame f;
  f.origin = origin;
  f.n = normal.normalized();
  Vec3 u = Vec3::UnitX() - Vec3::UnitX().dot(f.n) * f.n;
  if (u.norm() < 1e-6) u = Vec3::UnitY() - Vec3::UnitY().dot(f.n) * f.n;
  f.u = u.normalized();
  f.v = f.n.cross(f.u);
  return f;
}

namespace {

Vec3 polygon_normal(const std::vector<Vec3>& pts, const std::vector<VertexId>& face) {
  // Newell's method; magnitude is twice the polygon area.
  Vec3 n = Vec3::Zero();
  for (std::size_t i = 0; i < face.size(); ++i) {
    const Vec3& a = pts[face[i]];
    const Vec3& b = pts[face[(i + 1) % face.size()]];
    n += a.cross(b);
  }
  return n;
}

void symmetrize(std::vector<std::vector<VertexId>>& adj) {
  std::vector<std::vector<VertexId>> sym(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) {
    for (VertexId j : adj[i]) {
      if (j == static_cast<VertexId>(i)) continue;
      sym[i].push_back(j);
      sym[j].push_back(static_cast<VertexId>(i));
    }
  }
  for (auto& l : sym) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  adj = std::move(sym);
}

}  // namespace

Surface Surface::from_mesh(std::vector<Vec3> vertices, std::vector<std::vector<VertexId>> faces,
                           std::vector<Vec3> normals) {
  Surface s;
  s.vertices_ = std::move(vertices);
  const auto n = static_cast<VertexId>(s.vertices_.size());
  if (n < 4) throw DegenerateInputError("surface needs at least 4 vertices, got " + std::to_string(n));
  for (const auto& f : faces) {
    if (f.size() < 3) throw DegenerateInputError("face with fewer than 3 vertices");
    for (VertexId v : f)
      if (v < 0 || v >= n) throw DegenerateInputError("face index out of range: " + std::to_string(v));
  }
  s.faces_ = std::move(faces);

  s.adjacency_.assign(n, {});
  for (const auto& f : s.faces_) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      VertexId a = f[i], b = f[(i + 1) % f.size()];
      if (a != b) s.adjacency_[a].push_back(b);
    }
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s.triangles_.push_back({f[0], f[i], f[i + 1]});
  }
  symmetrize(s.adjacency_);

  if (normals.size() == s.vertices_.size()) {
    s.normals_ = std::move(normals);
  } else {
    s.normals_.assign(n, Vec3::Zero());
    for (const auto& f : s.faces_) {
      const Vec3 fn = polygon_normal(s.vertices_, f);
      for (VertexId v : f) s.normals_[v] += fn;
    }
  }

  s.vertexArea_.assign(n, 0.0);
  for (const auto& f : s.faces_) {
    const double a = 0.5 * polygon_normal(s.vertices_, f).norm();
    for (VertexId v : f) s.vertexArea_[v] += a / static_cast<double>(f.size());
  }
  s.finalize();
  return s;
}

Surface Surface::from_point_cloud(std::vector<Vec3> vertices, std::vector<Vec3> normals, int k) {
  Surface s;
  s.vertices_ = std::move(vertices);
  const auto n = static_cast<VertexId>(s.vertices_.size());
  if (n < 4) throw DegenerateInputError("surface needs at least 4 vertices, got " + std::to_string(n));
  const PointIndex index(s.vertices_);
  const auto kk = static_cast<std::size_t>(std::min<int>(k, n - 1));

  s.adjacency_.assign(n, {});
  std::vector<std::vector<VertexId>> knn(n);
  for (VertexId i = 0; i < n; ++i) {
    for (const auto& [j, d] : index.nearest(s.vertices_[i], kk + 1)) {
      if (j != i && knn[i].size() < kk) knn[i].push_back(j);
    }
    s.adjacency_[i] = knn[i];
  }
  symmetrize(s.adjacency_);

  if (normals.size() == s.vertices_.size()) {
    s.normals_ = std::move(normals);
  } else {
    s.normals_.assign(n, Vec3::UnitZ());
    for (VertexId i = 0; i < n; ++i) {
      Vec3 mean = s.vertices_[i];
      for (VertexId j : knn[i]) mean += s.vertices_[j];
      mean /= static_cast<double>(knn[i].size() + 1);
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      auto acc = [&](const Vec3& p) { cov += (p - mean) * (p - mean).transpose(); };
      acc(s.vertices_[i]);
      for (VertexId j : knn[i]) acc(s.vertices_[j]);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
      s.normals_[i] = es.eigenvectors().col(0);
    }
    // Orient consistently along a Euclidean minimum spanning tree (Prim) of
    // the k-nn graph, starting from the vertex with maximal z.
    std::vector<std::uint8_t> done(n, 0);
    for (;;) {
      VertexId root = kNoVertex;
      for (VertexId i = 0; i < n; ++i)
        if (!done[i] && (root == kNoVertex || s.vertices_[i].z() > s.vertices_[root].z())) root = i;
      if (root == kNoVertex) break;
      if (s.normals_[root].z() < 0) s.normals_[root] = -s.normals_[root];
      using Item = std::tuple<double, VertexId, VertexId>;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      pq.emplace(0.0, root, root);
      while (!pq.empty()) {
        auto [w, v, parent] = pq.top();
        pq.pop();
        if (done[v]) continue;
        done[v] = 1;
        if (v != parent && s.normals_[v].dot(s.normals_[parent]) < 0) s.normals_[v] = -s.normals_[v];
        for (VertexId j : s.adjacency_[v])
          if (!done[j]) pq.emplace((s.vertices_[j] - s.vertices_[v]).norm(), j, v);
      }
    }
  }
  s.vertexArea_.assign(n, 0.0);
  s.finalize();
  return s;
}

void Surface::finalize() {
  const auto n = static_cast<VertexId>(vertices_.size());
  active_.assign(n, 1);
  std::size_t isolated = 0;
  for (VertexId i = 0; i < n; ++i) {
    if (adjacency_[i].empty()) {
      active_[i] = 0;
      ++isolated;
    }
  }
  if (isolated > 0) spdlog::warn("{} isolated vertices excluded from matching", isolated);
  if (isolated == static_cast<std::size_t>(n)) throw DegenerateInputError("surface has no connected vertices");

  for (VertexId i = 0; i < n; ++i) {
    const double len = normals_[i].norm();
    if (len > 1e-300) {
      normals_[i] /= len;
    } else {
      normals_[i] = Vec3::UnitZ();
    }
  }

  double sum = 0.0;
  std::size_t count = 0;
  for (VertexId i = 0; i < n; ++i) {
    for (VertexId j : adjacency_[i]) {
      if (j > i) {
        sum += (vertices_[i] - vertices_[j]).norm();
        ++count;
      }
    }
  }
  epsilon0_ = sum / static_cast<double>(count);
  if (!(epsilon0_ > 0)) throw DegenerateInputError("zero average edge length");

  if (faces_.empty()) {
    for (VertexId i = 0; i < n; ++i) vertexArea_[i] = active_[i] ? epsilon0_ * epsilon0_ : 0.0;
  }
  totalArea_ = std::accumulate(vertexArea_.begin(), vertexArea_.end(), 0.0);

  vertexTriangleOffsets_.assign(n + 1, 0);
  for (const auto& t : triangles_)
    for (VertexId v : t) ++vertexTriangleOffsets_[v + 1];
  for (VertexId i = 0; i < n; ++i) vertexTriangleOffsets_[i + 1] += vertexTriangleOffsets_[i];
  vertexTriangles_.assign(vertexTriangleOffsets_.back(), 0);
  {
    std::vector<std::size_t> fill(vertexTriangleOffsets_.begin(), vertexTriangleOffsets_.end() - 1);
    for (std::size_t t = 0; t < triangles_.size(); ++t)
      for (VertexId v : triangles_[t]) vertexTriangles_[fill[v]++] = static_cast<std::int32_t>(t);
  }

  const auto& pts = vertices_;
  level0_ = Graph::from_lists(adjacency_, [&](VertexId a, VertexId b) { return (pts[a] - pts[b]).norm(); });

  // Extended graph: three rings, Euclidean reach 2.5 * epsilon0, 1-ring always kept.
  const double reach = 2.5 * epsilon0_;
  std::vector<std::vector<VertexId>> ext(n);
  std::vector<int> ring(n, -1);
  std::vector<VertexId> touched;
  for (VertexId i = 0; i < n; ++i) {
    touched.clear();
    ring[i] = 0;
    touched.push_back(i);
    std::vector<VertexId> frontier{i};
    for (int r = 1; r <= 3; ++r) {
      std::vector<VertexId> next;
      for (VertexId v : frontier)
        for (VertexId w : adjacency_[v])
          if (ring[w] < 0) {
            ring[w] = r;
            touched.push_back(w);
            next.push_back(w);
          }
      frontier = std::move(next);
    }
    for (VertexId w : touched) {
      if (w == i) continue;
      if (ring[w] == 1 || (pts[w] - pts[i]).norm() <= reach) ext[i].push_back(w);
    }
    for (VertexId w : touched) ring[w] = -1;
    std::sort(ext[i].begin(), ext[i].end());
  }
  geodesicGraph_ = Graph::from_lists(ext, [&](VertexId a, VertexId b) { return (pts[a] - pts[b]).norm(); });

  std::vector<Vec3> activePts;
  diameter_ = estimate_diameter(vertices_);
  index_ = PointIndex(vertices_);
}

std::size_t Surface::active_count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), std::uint8_t{1}));
}

std::uint64_t Surface::content_hash() const {
  // FNV-1a over the raw bytes.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  const std::uint64_t n = vertices_.size();
  mix(&n, sizeof n);
  for (const auto& v : vertices_) mix(v.data(), 3 * sizeof(double));
  for (const auto& v : normals_) mix(v.data(), 3 * sizeof(double));
  for (const auto& l : adjacency_) {
    const std::uint64_t d = l.size();
    mix(&d, sizeof d);
    mix(l.data(), l.size() * sizeof(VertexId));
  }
  return h;
}

double estimate_diameter(std::span<const Vec3> points, std::size_t sampleSize) {
  if (points.empty()) return 0.0;
  std::vector<std::size_t> sample;
  if (points.size() <= sampleSize) {
    sample.resize(points.size());
    std::iota(sample.begin(), sample.end(), 0);
  } else {
    std::vector<double> d(points.size(), kInf);
    std::size_t cur = 0;
    for (std::size_t s = 0; s < sampleSize; ++s) {
      sample.push_back(cur);
      std::size_t best = 0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        d[i] = std::min(d[i], (points[i] - points[cur]).norm());
        if (d[i] > d[best]) best = i;
      }
      cur = best;
    }
  }
  double diam = 0.0;
  for (std::size_t a = 0; a < sample.size(); ++a)
    for (std::size_t b = a + 1; b < sample.size(); ++b)
      diam = std::max(diam, (points[sample[a]] - points[sample[b]]).norm());
  return diam;
}

SurfaceStats surface_stats(const Surface& surface) {
  return {surface.epsilon0(), surface.diameter(), 0.05 * surface.diameter()};
}

TangentFrame tangent_frame(const Surface& surface, VertexId vertex) {
  if (vertex < 0 || static_cast<std::size_t>(vertex) >= surface.vertex_count())
    throw PreconditionError("vertex index out of range");
  return frame_from_normal(surface.position(vertex), surface.normal(vertex));
}

MlsModel::MlsModel(const Surface& surface)
    : MlsModel(surface, 2.0 * surface.epsilon0(), 20, 1e-8 * surface.diameter()) {}

MlsModel::MlsModel(const Surface& surface, double bandwidth, int maxIterations, double tolerance)
    : source(&surface),
      kernelBandwidth(bandwidth),
      maxProjectionIterations(maxIterations),
      projectionTolerance(tolerance) {
  if (!(bandwidth > 0) || !(tolerance > 0)) throw PreconditionError("MLS bandwidth and tolerance must be positive");
}

namespace {

struct LocalFit {
  Vec3 center;
  TangentFrame frame;
  Eigen::Matrix<double, 6, 1> coeff = Eigen::Matrix<double, 6, 1>::Zero();
  double scale = 1.0;

  // Vertical foot point of p over the height field, and the height-field normal there.
  std::pair<Vec3, Vec3> foot(const Vec3& p) const {
    const Vec3 d = p - center;
    const double u = d.dot(frame.u) / scale, v = d.dot(frame.v) / scale;
    const double z = coeff[0] + coeff[1] * u + coeff[2] * v + coeff[3] * u * u + coeff[4] * u * v + coeff[5] * v * v;
    const double zu = coeff[1] + 2 * coeff[3] * u + coeff[4] * v;
    const double zv = coeff[2] + coeff[4] * u + 2 * coeff[5] * v;
    const Vec3 pt = center + scale * (u * frame.u + v * frame.v + z * frame.n);
    const Vec3 nrm = (frame.n - zu * frame.u - zv * frame.v).normalized();
    return {pt, nrm};
  }
};

// Weighted local fit around y: blended normal and centroid, refined by a
// quadratic height field in the blended frame.
bool local_fit(const MlsModel& model, const Vec3& y, std::vector<VertexId>& nbrs, LocalFit& fit, bool firstStep) {
  const Surface& s = *model.source;
  const double h = model.kernelBandwidth;
  const double R2 = 6.25 * h * h;
  s.index().within(y, 2.5 * h, nbrs);
  nbrs.erase(std::remove_if(nbrs.begin(), nbrs.end(), [&](VertexId v) { return !s.active(v); }), nbrs.end());
  if (nbrs.size() < 3) {
    nbrs.clear();
    for (const auto& [v, d] : s.index().nearest(y, 12)) {
      if (!s.active(v)) continue;
      if (d > 10.0 * h) break;
      nbrs.push_back(v);
      if (nbrs.size() == 8) break;
    }
    if (nbrs.empty()) {
      if (firstStep) throw OutOfBandError("no surface vertex within 10 kernel bandwidths");
      return false;
    }
  }
  double dmin2 = kInf;
  for (VertexId v : nbrs) dmin2 = std::min(dmin2, (s.position(v) - y).squaredNorm());
  const double inv = 1.0 / (h * h);
  const bool taper = dmin2 < R2;
  thread_local std::vector<double> w;
  w.resize(nbrs.size());
  double wsum = 0.0;
  Vec3 nb = Vec3::Zero(), c = Vec3::Zero();
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    const double d2 = (s.position(nbrs[i]) - y).squaredNorm();
    // Tapered to zero at the cutoff so the fit varies continuously with y.
    const double t = taper ? std::max(0.0, 1.0 - d2 / R2) : 1.0;
    w[i] = std::exp(-(d2 - dmin2) * inv) * t * t;
    wsum += w[i];
    nb += w[i] * s.normal(nbrs[i]);
    c += w[i] * s.position(nbrs[i]);
  }
  if (!(wsum > 0) || nb.norm() < 1e-9 * wsum) return false;
  c /= wsum;
  fit.center = c;
  fit.frame = frame_from_normal(c, nb);
  fit.scale = h;
  fit.coeff.setZero();
  if (nbrs.size() >= 8) {
    Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      const Vec3 d = (s.position(nbrs[i]) - c) / h;
      const double u = d.dot(fit.frame.u), v = d.dot(fit.frame.v), z = d.dot(fit.frame.n);
      Eigen::Matrix<double, 6, 1> phi;
      phi << 1, u, v, u * u, u * v, v * v;
      A += w[i] * phi * phi.transpose();
      b += w[i] * z * phi;
    }
    A.diagonal().array() += 1e-9 * A.trace();
    for (int k = 3; k < 6; ++k) A(k, k) += 1e-6 * A(0, 0);
    Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(A);
    if (ldlt.info() == Eigen::Success) {
      Eigen::Matrix<double, 6, 1> x = ldlt.solve(b);
      if (x.allFinite()) fit.coeff = x;
    }
  }
  return true;
}

}  // namespace

Projection mls_project(const MlsModel& model, const Vec3& p) {
  thread_local std::vector<VertexId> nbrs;
  Projection out;
  Vec3 y = p;
  LocalFit fit;
  for (int it = 0; it < model.maxProjectionIterations; ++it) {
    if (!local_fit(model, y, nbrs, fit, it == 0)) break;
    auto [foot, nrm] = fit.foot(p);
    const double move = (foot - y).norm();
    y = foot;
    out.normal = nrm;
    out.iterations = it + 1;
    if (move < model.projectionTolerance) {
      out.converged = true;
      break;
    }
  }
  if (out.converged) {
    out.point = y;
    return out;
  }
  const Surface& s = *model.source;
  const VertexId v = s.index().nearest_one(p);
  const Vec3& q = s.position(v);
  const Vec3& n = s.normal(v);
  out.point = p - (p - q).dot(n) * n;
  out.normal = n;
  out.fallback = true;
  return out;
}

double mls_residual(const MlsModel& model, const Vec3& p) {
  thread_local std::vector<VertexId> nbrs;
  LocalFit fit;
  if (!local_fit(model, p, nbrs, fit, true)) return kInf;
  return (fit.foot(p).first - p).norm();
}

}  // namespace isogrow
