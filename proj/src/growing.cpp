#include "isogrow/growing.hpp"

#include "isogrow/seeding.hpp"

#include <Eigen/Sparse>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <queue>

namespace isogrow {

namespace {

Vec3 project_tangent(const Vec3& v, const Vec3& n) { return v - v.dot(n) * n; }

Vec3 unit_or_zero(const Vec3& v) {
  const double len = v.norm();
  return len > 0 ? Vec3(v / len) : Vec3::Zero();
}

Projection checked_projection(const MlsModel& mls, const Vec3& p) {
  const Projection pr = mls_project(mls, p);
  if (pr.fallback) throw Error("MLS projection did not converge");
  return pr;
}

}  // namespace

Mat3 transport_operator(const Surface& surface, const MlsModel& mls, const GeodesicPath& path, double stepFactor) {
  if (path.points.empty()) throw PreconditionError("parallel_transport on an empty path");
  const double step = stepFactor * surface.epsilon0();
  Mat3 M = Mat3::Identity();
  auto carry = [&](const Vec3& at) {
    const Vec3 n = checked_projection(mls, at).normal;
    M = (Mat3::Identity() - n * n.transpose()) * M;
    // Rescale to keep the product well conditioned; only directions matter.
    const double s = M.norm();
    if (!(s > 0)) throw Error("parallel transport degenerated");
    M /= s;
  };
  carry(path.points.front());
  for (std::size_t i = 1; i < path.points.size(); ++i) {
    const Vec3 a = path.points[i - 1], b = path.points[i];
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
    for (int k = 1; k <= pieces; ++k) carry(a + (b - a) * (static_cast<double>(k) / pieces));
  }
  return M;
}

Vec3 parallel_transport(const Surface& surface, const MlsModel& mls, const GeodesicPath& path, const Vec3& direction,
                        double stepFactor) {
  const Vec3 d = unit_or_zero(transport_operator(surface, mls, path, stepFactor) * direction);
  if (d.norm() == 0.0) throw Error("parallel transport degenerated");
  return d;
}

SurfaceWalk walk_on_surface(const MlsModel& mls, const Vec3& start, const Vec3& direction, double length,
                            const Vec3& carried, double step) {
  SurfaceWalk w;
  const Projection p0 = checked_projection(mls, start);
  w.point = p0.point;
  w.normal = p0.normal;
  w.direction = unit_or_zero(project_tangent(direction, w.normal));
  w.carried = unit_or_zero(project_tangent(carried, w.normal));
  if (w.direction.norm() == 0.0) throw Error("walk direction is normal to the surface");
  double remaining = length;
  while (remaining > 1e-12) {
    const double h = std::min(step, remaining);
    const Projection pr = checked_projection(mls, w.point + h * w.direction);
    const double moved = (pr.point - w.point).norm();
    if (moved < 0.1 * h) throw Error("surface walk stalled");
    const Vec3 heading = unit_or_zero(project_tangent(pr.point - w.point, pr.normal));
    w.point = pr.point;
    w.normal = pr.normal;
    w.direction = heading.norm() > 0 ? heading : unit_or_zero(project_tangent(w.direction, w.normal));
    w.carried = unit_or_zero(project_tangent(w.carried, w.normal));
    remaining -= moved;
  }
  return w;
}

Vec3 riemannian_mean(const Surface& surface, const MlsModel& mls, std::span<const Vec3> points,
                     std::span<const double> weights, double spreadFactor) {
  if (points.empty() || points.size() != weights.size()) throw PreconditionError("riemannian_mean needs weighted points");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0) throw PreconditionError("negative weight");
    wsum += w;
  }
  if (!(wsum > 0)) throw PreconditionError("riemannian_mean needs a positive weight");
  const double bound = spreadFactor * surface.epsilon0();
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (weights[i] > 0 && weights[j] > 0 && (points[i] - points[j]).norm() > bound)
        throw PreconditionError("points spread beyond the injective range");
  std::size_t heaviest = 0;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (weights[i] > weights[heaviest]) heaviest = i;
  std::size_t positive = 0;
  for (double w : weights) positive += w > 0;
  if (positive == 1) return points[heaviest];

  const double tol = 1e-10 * surface.epsilon0();
  Projection y = checked_projection(mls, points[heaviest]);
  for (int it = 0; it < 50; ++it) {
    // Tangent-plane log map approximation, scaled to chord length.
    Vec3 step = Vec3::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (weights[i] <= 0) continue;
      const Vec3 d = points[i] - y.point;
      const Vec3 t = project_tangent(d, y.normal);
      const double tn = t.norm();
      step += weights[i] * (tn > 0 ? Vec3(t * (d.norm() / tn)) : Vec3::Zero());
    }
    step /= wsum;
    const Projection next = checked_projection(mls, y.point + step);
    const double moved = (next.point - y.point).norm();
    y = next;
    if (moved <= tol) break;
  }
  return y.point;
}

GrowContext::GrowContext(const Surface& S_, const MlsModel& mlsS_, const TopologyHierarchy& hierS_, const Surface& T_,
                         const MlsModel& mlsT_)
    : S(S_), mlsS(mlsS_), hierS(hierS_), T(T_), mlsT(mlsT_) {
  if (hierS.level_count() < 2) throw PreconditionError("growing needs at least two hierarchy levels");
}

SourcePath GrowContext::source_path(VertexId from, VertexId to, std::span<const VertexId> chain,
                                    double stepFactor) const {
  const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(from)) << 32) |
                            static_cast<std::uint32_t>(to);
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  SourcePath sp;
  try {
    const GeodesicPath path = smooth_path(S, mlsS, path_through(S, chain));
    sp.tangent = initial_tangent(path, S.normal(from));
    sp.length = path.length;
    sp.transport = transport_operator(S, mlsS, path, stepFactor);
    sp.ok = sp.tangent.norm() > 0;
  } catch (const Error&) {
    sp.ok = false;
  }
  std::lock_guard lock(mutex_);
  cache_.emplace(key, sp);
  return sp;
}

std::size_t GrowContext::cached_paths() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

namespace {

double graph_weight(VertexId, VertexId, double w) { return w; }

// Dijkstra over U (plus an optional extra vertex) on S with S edge lengths.
struct RestrictedSearch {
  const GrowContext& ctx;
  const PartialMap& map;
  VertexId extra = kNoVertex;

  bool allowed(VertexId v) const { return v == extra || map.contains(v); }

  void domain(LocalDijkstra& d, VertexId src, double cap) const {
    const VertexId s[1] = {src};
    d.run(ctx.S.geodesic_graph(), std::span<const VertexId>(s, 1), cap, [&](VertexId v) { return allowed(v); },
          graph_weight);
  }
};

// Links between images and the T vertices they cover. A T vertex is inside
// the image region when some image lies within the link radius of it.
class ImageLinks {
 public:
  explicit ImageLinks(const GrowContext& ctx)
      : ctx_(ctx), radius_(0.75 * ctx.T.epsilon0()), out_(ctx.S.vertex_count()), in_(ctx.T.vertex_count()) {}
  ImageLinks(const GrowContext& ctx, const PartialMap& map) : ImageLinks(ctx) { rebuild(map); }

  std::vector<VertexId> covering(const Vec3& p) const {
    std::vector<VertexId> out;
    ctx_.T.index().within(p, radius_, out);
    std::erase_if(out, [&](VertexId t) { return !ctx_.T.active(t); });
    if (out.empty())
      for (const auto& [t, d] : ctx_.T.index().nearest(p, 8))
        if (ctx_.T.active(t)) {
          out.push_back(t);
          break;
        }
    return out;
  }
  void link(VertexId a, const Vec3& p) {
    unlink(a);
    out_[a] = covering(p);
    for (VertexId t : out_[a]) in_[t].push_back(a);
  }
  void unlink(VertexId a) {
    for (VertexId t : out_[a]) std::erase(in_[t], a);
    out_[a].clear();
  }
  void rebuild(const PartialMap& map) {
    for (auto& v : out_) v.clear();
    for (auto& v : in_) v.clear();
    for (VertexId a : map.domain()) link(a, map.image(a));
  }
  const std::vector<VertexId>& out(VertexId a) const { return out_[a]; }
  const std::vector<VertexId>& in(VertexId t) const { return in_[t]; }

 private:
  const GrowContext& ctx_;
  double radius_;
  std::vector<std::vector<VertexId>> out_;
  std::vector<std::vector<VertexId>> in_;
};

// Dijkstra on the image side: nodes [0, nS) are images of S vertices in U,
// linked along S edges by chords; nodes nS + t are T vertices inside the
// image region, linked along T edges and to the images covering them.
class ImageSearch {
 public:
  ImageSearch(const GrowContext& ctx, const PartialMap& map, const ImageLinks& links, VertexId extra = kNoVertex,
              const Vec3& extraImage = Vec3::Zero())
      : ctx_(ctx), map_(map), links_(links), extra_(extra), extraImage_(extraImage), nS_(ctx.S.vertex_count()) {
    if (extra != kNoVertex) extraLinks_ = links.covering(extraImage);
    auto& w = workspace();
    const std::size_t n = nS_ + ctx.T.vertex_count();
    if (w.dist.size() != n) {
      w.dist.assign(n, kInf);
      w.pred.assign(n, kNoVertex);
      w.done.assign(n, 0);
      w.touched.clear();
    }
  }

  void run(VertexId src, double cap) {
    auto& w = workspace();
    for (VertexId v : w.touched) {
      w.dist[v] = kInf;
      w.pred[v] = kNoVertex;
      w.done[v] = 0;
    }
    w.touched.clear();
    using Item = std::pair<double, VertexId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    auto relax = [&](VertexId from, VertexId to, double nd) {
      if (w.done[to] || nd > cap || nd >= w.dist[to]) return;
      if (w.dist[to] == kInf) w.touched.push_back(to);
      w.dist[to] = nd;
      w.pred[to] = from;
      heap.emplace(nd, to);
    };
    w.touched.push_back(src);
    w.dist[src] = 0.0;
    heap.emplace(0.0, src);
    const Graph& gS = ctx_.S.geodesic_graph();
    const Graph& gT = ctx_.T.geodesic_graph();
    while (!heap.empty()) {
      const auto [d, v] = heap.top();
      heap.pop();
      if (w.done[v] || d > w.dist[v]) continue;
      w.done[v] = 1;
      const Vec3 pv = position(v);
      if (static_cast<std::size_t>(v) < nS_) {
        for (VertexId b : gS.neighbors(v))
          if (allowed_image(b)) relax(v, b, d + (pv - image(b)).norm());
        for (VertexId t : v == extra_ ? extraLinks_ : links_.out(v))
          relax(v, node(t), d + (pv - ctx_.T.position(t)).norm());
      } else {
        const VertexId t = v - static_cast<VertexId>(nS_);
        const auto nb = gT.neighbors(t);
        const auto ws = gT.weights(t);
        for (std::size_t k = 0; k < nb.size(); ++k)
          if (covered(nb[k])) relax(v, node(nb[k]), d + ws[k]);
        for (VertexId a : links_.in(t))
          if (map_.contains(a) && a != extra_) relax(v, a, d + (pv - image(a)).norm());
        if (extra_ != kNoVertex && std::find(extraLinks_.begin(), extraLinks_.end(), t) != extraLinks_.end())
          relax(v, extra_, d + (pv - extraImage_).norm());
      }
    }
  }

  double distance(VertexId a) const { return workspace().dist[a]; }
  // Gradient of the path length from src to a with respect to each image on the path.
  void path_gradient(VertexId src, VertexId a, std::vector<std::pair<VertexId, Vec3>>& out) const {
    const auto& w = workspace();
    out.clear();
    VertexId next = kNoVertex;
    for (VertexId v = a;; v = w.pred[v]) {
      const VertexId prev = v == src ? kNoVertex : w.pred[v];
      if (static_cast<std::size_t>(v) < nS_) {
        const Vec3 p = position(v);
        Vec3 g = Vec3::Zero();
        if (prev != kNoVertex) g += unit_or_zero(p - position(prev));
        if (next != kNoVertex) g += unit_or_zero(p - position(next));
        out.emplace_back(v, g);
      }
      if (v == src) break;
      next = v;
    }
  }

 private:
  struct Workspace {
    std::vector<double> dist;
    std::vector<VertexId> pred;
    std::vector<std::uint8_t> done;
    std::vector<VertexId> touched;
  };
  static Workspace& workspace() {
    thread_local Workspace w;
    return w;
  }
  VertexId node(VertexId t) const { return static_cast<VertexId>(nS_) + t; }
  bool allowed_image(VertexId a) const { return a == extra_ || map_.contains(a); }
  bool covered(VertexId t) const {
    for (VertexId a : links_.in(t))
      if (map_.contains(a)) return true;
    return std::find(extraLinks_.begin(), extraLinks_.end(), t) != extraLinks_.end();
  }
  const Vec3& image(VertexId a) const { return a == extra_ ? extraImage_ : map_.image(a); }
  Vec3 position(VertexId v) const {
    if (static_cast<std::size_t>(v) < nS_) return image(v);
    return ctx_.T.position(v - static_cast<VertexId>(nS_));
  }

  const GrowContext& ctx_;
  const PartialMap& map_;
  const ImageLinks& links_;
  VertexId extra_;
  Vec3 extraImage_;
  std::vector<VertexId> extraLinks_;
  std::size_t nS_;
};

double level1_reach(const GrowContext& ctx, const GrowingParams& params) {
  return params.neighborhoodFactor * ctx.hierS.levels[1].spacing;
}

struct ObjectiveEdge {
  int group;  // edges sharing one image-side search
  VertexId x, y;
  double target;  // dist_U(x, y)
  double cap;     // image-side search radius
};

// Hierarchy edges inside U with their within-U target distances.
std::vector<ObjectiveEdge> objective_edges(const PartialMap& map, const GrowContext& ctx) {
  std::vector<ObjectiveEdge> edges;
  const std::size_t n = ctx.S.vertex_count();
  thread_local LocalDijkstra du(0);
  if (du.capacity() != n) du = LocalDijkstra(n);
  RestrictedSearch rs{ctx, map};
  int group = 0;
  for (std::size_t j = 0; j < ctx.hierS.level_count(); ++j) {
    const auto& L = ctx.hierS.levels[j];
    if (j == 0) {
      for (const auto& [a, b] : L.edges)
        if (map.contains(a) && map.contains(b)) {
          const double d = (ctx.S.position(a) - ctx.S.position(b)).norm();
          edges.push_back({-1, a, b, d, 0.0});
        }
      continue;
    }
    const double reach = kHierarchyConnectFactor * L.spacing * 2.0;
    for (std::size_t k = 0; k < L.samples.size(); ++k) {
      const VertexId x = L.samples[k];
      if (!map.contains(x)) continue;
      bool any = false;
      for (auto m : L.adjacency[k])
        if (L.samples[m] > x && map.contains(L.samples[m])) any = true;
      if (!any) continue;
      rs.domain(du, x, reach);
      ++group;
      for (auto m : L.adjacency[k]) {
        const VertexId y = L.samples[m];
        if (y <= x || !map.contains(y) || du.distance(y) == kInf) continue;
        edges.push_back({group, x, y, du.distance(y), 2.0 * du.distance(y) + ctx.S.epsilon0()});
      }
    }
  }
  return edges;
}

struct EdgeEval {
  double value = 0.0;  // image-side distance (saturated at cap)
  std::vector<std::pair<VertexId, Vec3>> gradient;  // per image on the path
};

std::vector<EdgeEval> evaluate_edges(const PartialMap& map, const GrowContext& ctx,
                                     const std::vector<ObjectiveEdge>& edges) {
  std::vector<EdgeEval> out(edges.size());
  const ImageLinks links(ctx, map);
  ImageSearch df(ctx, map, links);
  int current = -1;
  double currentCap = -1.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& E = edges[e];
    if (E.cap == 0.0) {
      const Vec3 d = map.image(E.x) - map.image(E.y);
      const Vec3 u = unit_or_zero(d);
      out[e].value = d.norm();
      out[e].gradient = {{E.x, u}, {E.y, -u}};
      continue;
    }
    if (E.group != current) {
      // Edges of one group are contiguous; search once with the largest cap.
      double cap = E.cap;
      for (std::size_t f = e + 1; f < edges.size() && edges[f].group == E.group; ++f) cap = std::max(cap, edges[f].cap);
      df.run(E.x, cap);
      current = E.group;
      currentCap = cap;
    }
    const double d = df.distance(E.y);
    if (d == kInf) {
      out[e].value = currentCap;
      continue;
    }
    out[e].value = d;
    df.path_gradient(E.x, E.y, out[e].gradient);
  }
  return out;
}

double objective_value(const std::vector<ObjectiveEdge>& edges, const std::vector<EdgeEval>& ev) {
  double sum = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double r = ev[e].value - edges[e].target;
    sum += r * r;
  }
  return sum;
}

}  // namespace

double metric_objective(const PartialMap& map, const GrowContext& ctx) {
  const auto edges = objective_edges(map, ctx);
  return objective_value(edges, evaluate_edges(map, ctx, edges));
}

OptimizeReport optimize_metric(PartialMap& map, const GrowContext& ctx, const GrowingParams& params) {
  OptimizeReport rep;
  if (map.size() < 4) throw PreconditionError("optimize_metric needs at least 4 matched vertices");
  const auto edges = objective_edges(map, ctx);
  auto ev = evaluate_edges(map, ctx, edges);
  double E = objective_value(edges, ev);
  rep.objective.push_back(E);

  // Unknowns: two tangent coordinates per non-seed image.
  const auto& domain = map.domain();
  std::vector<std::int32_t> var(domain.size(), -1);
  std::int32_t nvar = 0;
  for (std::size_t k = 0; k < domain.size(); ++k)
    if (domain[k] != map.seedVertex) var[k] = nvar++;
  if (nvar == 0 || edges.empty()) return rep;

  int consecutiveRejections = 0;
  for (int it = 0; it < params.optimizeIterations; ++it) {
    if (E <= 1e-24) break;
    rep.iterations = it + 1;
    std::vector<TangentFrame> frames(domain.size());
    for (std::size_t k = 0; k < domain.size(); ++k)
      frames[k] = frame_from_normal(map.images()[k], mls_project(ctx.mlsT, map.images()[k]).normal);

    std::vector<Eigen::Triplet<double>> jt;
    Eigen::VectorXd r(static_cast<Eigen::Index>(edges.size()));
    for (std::size_t e = 0; e < edges.size(); ++e) {
      r[e] = ev[e].value - edges[e].target;
      for (const auto& [v, g] : ev[e].gradient) {
        const auto k = map.slot(v);
        if (var[k] < 0 || g.norm() == 0.0) continue;
        jt.emplace_back(static_cast<int>(e), 2 * var[k], g.dot(frames[k].u));
        jt.emplace_back(static_cast<int>(e), 2 * var[k] + 1, g.dot(frames[k].v));
      }
    }
    Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(edges.size()), 2 * nvar);
    J.setFromTriplets(jt.begin(), jt.end());
    Eigen::SparseMatrix<double> H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    double diagMean = 0.0;
    for (Eigen::Index i = 0; i < H.rows(); ++i) diagMean += H.coeff(i, i);
    diagMean = std::max(diagMean / static_cast<double>(H.rows()), 1e-12);
    Eigen::SparseMatrix<double> I(H.rows(), H.cols());
    I.setIdentity();
    H += (1e-3 * diagMean) * I;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(H);
    if (solver.info() != Eigen::Success) break;
    const Eigen::VectorXd delta = solver.solve(-g);
    if (!delta.allFinite()) break;

    double scale = 1.0;
    bool accepted = false;
    const std::vector<Vec3> before = map.images();
    while (consecutiveRejections < params.maxRejections) {
      for (std::size_t k = 0; k < domain.size(); ++k) {
        if (var[k] < 0) continue;
        const Vec3 moved = before[k] + scale * (delta[2 * var[k]] * frames[k].u + delta[2 * var[k] + 1] * frames[k].v);
        Vec3 on = moved;
        try {
          on = mls_project(ctx.mlsT, moved).point;
        } catch (const OutOfBandError&) {
          on = before[k];
        }
        map.set_image(domain[k], on);
      }
      auto trialEv = evaluate_edges(map, ctx, edges);
      const double trial = objective_value(edges, trialEv);
      if (trial < E) {
        const double rel = (E - trial) / E;
        E = trial;
        ev = std::move(trialEv);
        rep.objective.push_back(E);
        consecutiveRejections = 0;
        accepted = true;
        if (rel < 1e-9) it = params.optimizeIterations;
        break;
      }
      ++consecutiveRejections;
      ++rep.rejections;
      scale *= 0.5;
    }
    if (!accepted) {
      for (std::size_t k = 0; k < domain.size(); ++k) map.set_image(domain[k], before[k]);
      break;
    }
  }
  // Keep target directions tangent at the moved images.
  for (VertexId v : domain) {
    const Vec3 n = mls_project(ctx.mlsT, map.image(v)).normal;
    const Vec3 d = unit_or_zero(project_tangent(map.target_direction(v), n));
    if (d.norm() > 0) map.set_target_direction(v, d);
  }
  return rep;
}

std::vector<StretchViolation> stretch_violations(const PartialMap& map, const GrowContext& ctx, double nu,
                                                std::size_t level) {
  std::vector<StretchViolation> out;
  const std::size_t n = ctx.S.vertex_count();
  thread_local LocalDijkstra du(0);
  if (du.capacity() != n) du = LocalDijkstra(n);
  RestrictedSearch rs{ctx, map};
  const ImageLinks links(ctx, map);
  ImageSearch df(ctx, map, links);
  const auto& L = ctx.hierS.levels[level];
  const double cap = 4.0 * kHierarchyConnectFactor * L.spacing;
  for (std::size_t k = 0; k < L.samples.size(); ++k) {
    const VertexId x = L.samples[k];
    if (!map.contains(x)) continue;
    bool any = false;
    for (auto m : L.adjacency[k])
      if (L.samples[m] > x && map.contains(L.samples[m])) any = true;
    if (!any) continue;
    rs.domain(du, x, cap);
    df.run(x, 2.0 * cap);
    for (auto m : L.adjacency[k]) {
      const VertexId y = L.samples[m];
      if (y <= x || !map.contains(y) || du.distance(y) == kInf) continue;
      const double a = du.distance(y), b = df.distance(y);
      if (!(std::abs(a - b) <= nu)) out.push_back({x, y, a, b});
    }
  }
  return out;
}

void update_seed_distances(PartialMap& map, const GrowContext& ctx) {
  LocalDijkstra d(ctx.S.vertex_count());
  RestrictedSearch{ctx, map}.domain(d, map.seedVertex, kInf);
  for (VertexId v : map.domain()) map.set_seed_distance(v, d.distance(v));
}

namespace {

// Evicts violators of the level-1 stretch bound (the endpoint farther from
// the seed) together with their descendants in the seed-distance tree.
std::size_t evict_violations(PartialMap& map, const GrowContext& ctx, double nu, std::vector<std::uint8_t>& status,
                             std::uint8_t rejectedMark, double& area) {
  std::size_t evicted = 0;
  LocalDijkstra tree(ctx.S.vertex_count());
  for (;;) {
    RestrictedSearch{ctx, map}.domain(tree, map.seedVertex, kInf);
    std::vector<std::uint8_t> drop(ctx.S.vertex_count(), 0);
    bool any = false;
    for (VertexId v : map.domain())
      if (tree.distance(v) == kInf) drop[v] = 1, any = true;
    for (const auto& viol : stretch_violations(map, ctx, nu)) {
      const double dx = tree.distance(viol.x), dy = tree.distance(viol.y);
      VertexId far = (dx > dy || (dx == dy && viol.x > viol.y)) ? viol.x : viol.y;
      if (far == map.seedVertex) far = far == viol.x ? viol.y : viol.x;
      drop[far] = 1;
      any = true;
    }
    if (!any) break;
    for (VertexId v : tree.settled()) {
      const VertexId p = tree.predecessor(v);
      if (p != kNoVertex && drop[p]) drop[v] = 1;
    }
    drop[map.seedVertex] = 0;
    std::vector<VertexId> gone;
    for (VertexId v : map.domain())
      if (drop[v]) gone.push_back(v);
    if (gone.empty()) break;
    for (VertexId v : gone) {
      status[v] = rejectedMark;
      area -= ctx.S.vertex_area(v);
    }
    map.remove(gone);
    evicted += gone.size();
  }
  for (VertexId v : map.domain()) map.set_seed_distance(v, tree.distance(v));
  return evicted;
}

enum Status : std::uint8_t { kUnseen = 0, kQueued = 1, kMatched = 2, kRejected = 3 };

}  // namespace

PartialMap grow_region(const OrientedPointMatch& seed, const GrowContext& ctx, const GrowingParams& params,
                       GrowReport* report) {
  const Surface& S = ctx.S;
  const std::size_t n = S.vertex_count();
  PartialMap map(n);
  map.seed = seed;
  const double stepT = params.transportStepFactor * ctx.T.epsilon0();
  const double nu = params.nuFactor * S.epsilon0();

  std::vector<Vec3> normalT(n, Vec3::UnitZ());
  // Seed: snap to the nearest S vertex and carry the offset over to T.
  try {
    VertexId sv = kNoVertex;
    for (const auto& [v, d] : S.index().nearest(seed.s, 16))
      if (S.active(v)) {
        sv = v;
        break;
      }
    if (sv == kNoVertex) return map;
    const Vec3 nS = S.normal(sv);
    const Vec3 ds0 = unit_or_zero(project_tangent(seed.ds, nS));
    const Projection pt = checked_projection(ctx.mlsT, seed.t);
    const Vec3 dt0 = unit_or_zero(project_tangent(seed.dt, pt.normal));
    if (ds0.norm() == 0.0 || dt0.norm() == 0.0) return map;
    const Vec3 offset = project_tangent(S.position(sv) - seed.s, nS);
    Vec3 image = pt.point, dtv = dt0, nT = pt.normal;
    if (offset.norm() > 1e-12) {
      const double a = offset.dot(ds0), b = offset.dot(nS.cross(ds0));
      const Vec3 dir = a * dt0 + b * pt.normal.cross(dt0);
      const SurfaceWalk w = walk_on_surface(ctx.mlsT, pt.point, dir, offset.norm(), dt0, stepT);
      image = w.point;
      dtv = w.carried;
      nT = w.normal;
    }
    map.seedVertex = sv;
    map.add(sv, image, ds0, dtv, 0.0);
    normalT[sv] = nT;
  } catch (const Error& e) {
    spdlog::debug("seed transport failed: {}", e.what());
    return map;
  }

  const auto seedDist = dijkstra(S.geodesic_graph(), map.seedVertex).distance;
  std::vector<std::uint8_t> status(n, kUnseen);
  status[map.seedVertex] = kMatched;
  using Item = std::pair<double, VertexId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
  auto push_neighbors = [&](VertexId v) {
    for (VertexId w : S.adjacency()[v])
      if (status[w] == kUnseen && S.active(w) && seedDist[w] < kInf) {
        status[w] = kQueued;
        frontier.emplace(seedDist[w], w);
      }
  };
  push_neighbors(map.seedVertex);

  map.area = S.vertex_area(map.seedVertex);
  double lastTrigger = map.area;
  const double reach = level1_reach(ctx, params);
  LocalDijkstra ball(n), du(n);
  ImageLinks links(ctx);
  links.link(map.seedVertex, map.image(map.seedVertex));
  std::vector<Vec3> q;
  std::vector<double> ones;
  std::vector<VertexId> chain, targets;

  while (!frontier.empty()) {
    const VertexId u = frontier.top().second;
    frontier.pop();
    if (status[u] != kQueued) continue;
    ball.run(S.geodesic_graph(), u, reach);

    // Transport each nearby matched vertex's position and frame to u.
    q.clear();
    Vec3 dsU = Vec3::Zero(), dtU = Vec3::Zero();
    int used = 0;
    for (VertexId y : ball.settled()) {
      if (params.maxSources > 0 && used >= params.maxSources) break;
      if (y == u || status[y] != kMatched) continue;
      if (used > 0 && !ctx.hierS.is_sample(1, y) && y != map.seedVertex) continue;
      chain = ball.path_to(y);
      std::reverse(chain.begin(), chain.end());
      const SourcePath sp = ctx.source_path(y, u, chain, params.transportStepFactor);
      if (!sp.ok) continue;
      const Vec3 ny = S.normal(y), dsy = map.source_direction(y);
      const double alpha = std::atan2(sp.tangent.dot(ny.cross(dsy)), sp.tangent.dot(dsy));
      const Vec3 m = normalT[y], dty = map.target_direction(y);
      const Vec3 dir = std::cos(alpha) * dty + std::sin(alpha) * m.cross(dty);
      SurfaceWalk w;
      try {
        w = walk_on_surface(ctx.mlsT, map.image(y), dir, sp.length, dty, stepT);
      } catch (const Error&) {
        continue;
      }
      q.push_back(w.point);
      if (used == 0) {
        dsU = unit_or_zero(project_tangent(sp.transport * dsy, S.normal(u)));
        dtU = w.carried;
      }
      ++used;
    }

    GrowEvent event{u, false, kInf};
    Vec3 fu;
    Projection fuProj;
    bool ok = !q.empty();
    if (ok) {
      ones.assign(q.size(), 1.0);
      try {
        fu = riemannian_mean(ctx.T, ctx.mlsT, q, ones, params.spreadFactor);
        fuProj = checked_projection(ctx.mlsT, fu);
        fu = fuProj.point;
      } catch (const Error&) {
        ok = false;
      }
    }
    if (ok) {
      // Stretch gate against matched level-1 samples, the seed and matched 1-ring neighbors.
      RestrictedSearch rs{ctx, map, u};
      rs.domain(du, u, 2.0 * reach);
      targets.clear();
      for (VertexId y : ball.settled())
        if (y != u && status[y] == kMatched && (ctx.hierS.is_sample(1, y) || y == map.seedVertex)) targets.push_back(y);
      for (VertexId y : S.adjacency()[u])
        if (status[y] == kMatched) targets.push_back(y);
      double cap = 0.0;
      for (VertexId y : targets)
        if (du.distance(y) < kInf) cap = std::max(cap, du.distance(y));
      // Image distances beyond cap + nu violate the bound regardless of their value.
      ImageSearch df(ctx, map, links, u, fu);
      df.run(u, cap + 2.0 * nu);
      double worst = 0.0;
      for (VertexId y : targets) {
        const double a = du.distance(y);
        if (a == kInf) continue;
        worst = std::max(worst, std::abs(a - df.distance(y)));
      }
      event.stretch = worst;
      ok = worst <= nu;
    }
    if (ok) {
      const Vec3 dtT = unit_or_zero(project_tangent(dtU, fuProj.normal));
      const Vec3 dsS = unit_or_zero(project_tangent(dsU, S.normal(u)));
      if (dtT.norm() == 0.0 || dsS.norm() == 0.0) ok = false;
      if (ok) {
        double sd = kInf;
        const auto nb = S.geodesic_graph().neighbors(u);
        const auto ws = S.geodesic_graph().weights(u);
        for (std::size_t k = 0; k < nb.size(); ++k)
          if (status[nb[k]] == kMatched) sd = std::min(sd, map.seed_distance(nb[k]) + ws[k]);
        map.add(u, fu, dsS, dtT, sd);
        links.link(u, fu);
        normalT[u] = fuProj.normal;
        status[u] = kMatched;
        map.area += S.vertex_area(u);
        push_neighbors(u);
      }
    }
    if (!ok) status[u] = kRejected;
    event.accepted = ok;
    if (report && params.recordLog) report->events.push_back(event);

    if (ok && params.optimize && map.size() >= 4 && map.area >= 2.0 * lastTrigger) {
      const OptimizeReport opt = optimize_metric(map, ctx, params);
      if (report) report->optimizations.push_back(opt);
      for (VertexId v : map.domain()) normalT[v] = mls_project(ctx.mlsT, map.image(v)).normal;
      const std::size_t ev = evict_violations(map, ctx, nu, status, kRejected, map.area);
      if (report) report->evicted += ev;
      links.rebuild(map);
      lastTrigger = map.area;
    }
  }
  const std::size_t ev = evict_violations(map, ctx, nu, status, kRejected, map.area);
  if (report) report->evicted += ev;
  return map;
}

}  // namespace isogrow
