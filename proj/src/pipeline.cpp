#include "isogrow/pipeline.hpp"

#include "isogrow/descriptors.hpp"
#include "isogrow/geodesics.hpp"
#include "isogrow/growing.hpp"
#include "isogrow/mesh_io.hpp"
#include "isogrow/seeding.hpp"
#include "isogrow/spatial_index.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace isogrow {

Config Config::preset(const std::string& name) {
  Config c;
  if (name == "clean") return c;
  if (name == "noisy") {
    c.rMinFactor = 1.5;
    c.rMaxFactor = 3.4;
    return c;
  }
  throw PreconditionError("unknown preset '" + name + "' (expected clean or noisy)");
}

void Config::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw PreconditionError(std::string("invalid config: ") + what);
  };
  require(rMinFactor > 0 && rMaxFactor > rMinFactor, "need 0 < rMinFactor < rMaxFactor");
  require(std::isfinite(rho), "rho must be finite");
  require(nuFactor > 0, "nuFactor must be positive");
  require(maxSeeds > 0 && K > 0 && batchSize > 0, "maxSeeds, K and batchSize must be positive");
  require(omegaD > 0 && clusterThreshold > 0 && lambdaDsFactor > 0, "weights must be positive");
  require(levels >= 2, "at least two hierarchy levels");
  require(knn > 0, "knn must be positive");
  require(contours == kContours, "the descriptor has a fixed number of contours");
}

unsigned Config::worker_count() const { return threads > 0 ? threads : default_thread_count(); }

nlohmann::json to_json(const Config& c) {
  return {{"rMinFactor", c.rMinFactor},
          {"rMaxFactor", c.rMaxFactor},
          {"rho", c.rho},
          {"nuFactor", c.nuFactor},
          {"maxSeeds", c.maxSeeds},
          {"K", c.K},
          {"omegaD", c.omegaD},
          {"clusterThreshold", c.clusterThreshold},
          {"levels", c.levels},
          {"knn", c.knn},
          {"contours", c.contours},
          {"lambdaDsFactor", c.lambdaDsFactor},
          {"batchSize", c.batchSize},
          {"threads", c.threads},
          {"cacheDir", c.cacheDir.string()},
          {"seedsFile", c.seedsFile.string()}};
}

Config config_from_json(const nlohmann::json& j) {
  Config c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("rMinFactor", c.rMinFactor);
  get("rMaxFactor", c.rMaxFactor);
  get("rho", c.rho);
  get("nuFactor", c.nuFactor);
  get("maxSeeds", c.maxSeeds);
  get("K", c.K);
  get("omegaD", c.omegaD);
  get("clusterThreshold", c.clusterThreshold);
  get("levels", c.levels);
  get("knn", c.knn);
  get("contours", c.contours);
  get("lambdaDsFactor", c.lambdaDsFactor);
  get("batchSize", c.batchSize);
  get("threads", c.threads);
  if (j.contains("cacheDir")) c.cacheDir = j.at("cacheDir").get<std::string>();
  if (j.contains("seedsFile")) c.seedsFile = j.at("seedsFile").get<std::string>();
  return c;
}

double PipelineResult::total_seconds() const {
  double s = 0.0;
  for (const auto& t : timings) s += t.seconds;
  return s;
}

namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& out) : out_(out), start_(std::chrono::steady_clock::now()) {}
  void lap(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    out_.push_back({stage, std::chrono::duration<double>(now - start_).count()});
    start_ = now;
  }

 private:
  std::vector<StageTiming>& out_;
  std::chrono::steady_clock::time_point start_;
};

// Pulls seeds in fixed-size rounds; each round is grown in parallel and only
// then made visible to the redundancy check of the next round.
template <class NextSeed>
void grow_in_rounds(const Config& config, const GrowContext& ctx, const GrowingParams& gp, NextSeed&& next,
                    PipelineResult& r) {
  const unsigned threads = config.worker_count();
  int attempted = 0;
  for (;;) {
    std::vector<OrientedPointMatch> batch;
    while (static_cast<int>(batch.size()) < config.batchSize && attempted < config.maxSeeds) {
      auto s = next(r.maps);
      if (!s) break;
      batch.push_back(*s);
      ++attempted;
    }
    if (batch.empty()) break;
    std::vector<PartialMap> grown(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) { grown[i] = grow_region(batch[i], ctx, gp); });
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int id = static_cast<int>(r.seeds.size());
      r.seeds.push_back(batch[i]);
      r.seedMapSizes.push_back(grown[i].size());
      spdlog::debug("seed {} grew {} vertices", id, grown[i].size());
      if (grown[i].size() < kMinOverlap) continue;
      grown[i].id = id;
      r.maps.push_back(std::move(grown[i]));
    }
  }
}

}  // namespace

PipelineResult run_pipeline(const Config& config, const Surface& S, const Surface& T) {
  config.validate();
  PipelineResult r;
  StageClock clock(r.timings);
  const unsigned threads = config.worker_count();

  const MlsModel mlsS(S), mlsT(T);
  TopologyHierarchy hierS;
  if (!config.cacheDir.empty() && config.levels == kHierarchyLevels) {
    fs::create_directories(config.cacheDir);
    hierS = build_hierarchy_cached(S, config.cacheDir);
  } else {
    hierS = build_hierarchy(S, config.levels);
  }
  const GrowContext ctx(S, mlsS, hierS, T, mlsT);
  GrowingParams gp;
  gp.nuFactor = config.nuFactor;
  clock.lap("surface");

  if (!config.seedsFile.empty()) {
    const auto seeds = read_seed_file(config.seedsFile);
    clock.lap("seeding");
    std::size_t k = 0;
    grow_in_rounds(config, ctx, gp,
                   [&](const std::vector<PartialMap>&) -> std::optional<OrientedPointMatch> {
                     if (k >= seeds.size()) return std::nullopt;
                     return seeds[k++];
                   },
                   r);
    clock.lap("growing");
  } else {
    const double R = surface_stats(S).R;
    const double rMin = config.rMinFactor * R, rMax = config.rMaxFactor * R;
    const FeatureSet featS = detect_features(S, compute_descriptors(S, rMin, rMax, threads), R, threads);
    const FeatureSet featT = detect_features(T, compute_descriptors(T, rMin, rMax, threads), R, threads);
    r.sourceFeatures = featS.featureVertexIds.size();
    r.targetFeatures = featT.featureVertexIds.size();
    clock.lap("descriptors");

    SeedingParams sp;
    sp.K = config.K;
    sp.omegaD = config.omegaD;
    sp.clusterThreshold = config.clusterThreshold;
    sp.maxSeeds = config.maxSeeds;
    const auto matches = candidate_matches(featS, featT, sp);
    r.candidateMatches = matches.size();
    const FeatureDistances distS(S, featS.featureVertexIds, threads), distT(T, featT.featureVertexIds, threads);
    const ClusterContext cctx = make_cluster_context(S, hierS, distS, distT);
    auto clusters = grow_match_clusters(matches, cctx, sp);
    r.matchClusters = clusters.size();
    SeedQueue queue(S, mlsS, T, mlsT, std::move(clusters), cctx, sp);
    clock.lap("seeding");
    grow_in_rounds(config, ctx, gp, [&](const std::vector<PartialMap>& grown) { return queue.next(grown); }, r);
    clock.lap("growing");
  }

  if (r.maps.empty()) {
    r.status = PipelineStatus::no_map;
    spdlog::error("no partial map was grown from {} seeds", r.seeds.size());
    return r;
  }
  ClusteringParams cp;
  cp.rho = config.rho;
  r.clustering = gdl_cluster(r.maps, S, T, cp, threads);
  clock.lap("clustering");

  std::vector<const PartialMap*> members;
  for (int id : r.clustering.clusters[r.clustering.winner].memberMapIds)
    for (const auto& m : r.maps)
      if (m.id == id) members.push_back(&m);
  MergeParams mp;
  mp.lambdaDsFactor = config.lambdaDsFactor;
  r.correspondence = merge_maps(members, S, T, mlsT, hierS.levels[1].spacing, mp, threads);
  clock.lap("merging");
  return r;
}

nlohmann::json timing_report(const PipelineResult& r) {
  nlohmann::json j;
  j["stages"] = nlohmann::json::array();
  for (const auto& t : r.timings) j["stages"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  j["totalSeconds"] = r.total_seconds();
  return j;
}

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream o(path);
  if (!o) throw Error("cannot write " + path.string());
  o << j.dump(2) << '\n';
}

nlohmann::json diagnostic_report(const PipelineResult& r) {
  nlohmann::json j;
  j["status"] = "no_map";
  j["sourceFeatures"] = r.sourceFeatures;
  j["targetFeatures"] = r.targetFeatures;
  j["candidateMatches"] = r.candidateMatches;
  j["matchClusters"] = r.matchClusters;
  j["seeds"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    const auto& s = r.seeds[i];
    j["seeds"].push_back({{"s", {s.s.x(), s.s.y(), s.s.z()}},
                          {"t", {s.t.x(), s.t.y(), s.t.z()}},
                          {"priority", s.priority},
                          {"grownVertices", r.seedMapSizes[i]}});
  }
  return j;
}

}  // namespace

PipelineResult run_pipeline(const Config& config, const fs::path& pathS, const fs::path& pathT, const fs::path& outDir) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Surface S = load_surface(pathS, config.knn);
  const Surface T = load_surface(pathT, config.knn);
  const double loadSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  PipelineResult r = run_pipeline(config, S, T);
  r.timings.insert(r.timings.begin(), {"load", loadSeconds});

  fs::create_directories(outDir);
  if (r.status == PipelineStatus::no_map) {
    write_json(outDir / "report.json", diagnostic_report(r));
    return r;
  }
  const auto t1 = std::chrono::steady_clock::now();
  write_correspondence(outDir / "correspondence.txt", r.correspondence);
  nlohmann::json clusters = cluster_report(r.clustering);
  clusters["maps"] = r.maps.size();
  clusters["seeds"] = r.seeds.size();
  write_json(outDir / "clusters.json", clusters);
  r.timings.push_back({"output", std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count()});
  write_json(outDir / "timing.json", timing_report(r));
  return r;
}

void write_correspondence(const fs::path& path, const FinalCorrespondence& c) {
  std::ofstream o(path);
  if (!o) throw Error("cannot write " + path.string());
  o << "# isogrow correspondence\n";
  o << "# source_vertices " << c.size() << '\n';
  o << "# srcIndex tx ty tz weightMass contributors\n";
  for (std::size_t v = 0; v < c.size(); ++v) {
    if (c.contributors[v] <= 0) continue;
    const Vec3& p = c.image[v];
    o << v << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << ' '
      << format_double(c.weightMass[v]) << ' ' << c.contributors[v] << '\n';
  }
}

FinalCorrespondence read_correspondence(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  FinalCorrespondence c;
  std::string line;
  std::size_t lineNo = 0;
  bool sized = false;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line[0] == '#') {
      std::string hash, key;
      std::size_t n = 0;
      ss >> hash >> key;
      if (key == "source_vertices") {
        if (!(ss >> n)) throw FormatError(path.string(), lineNo, "bad source_vertices header");
        c.image.assign(n, Vec3::Zero());
        c.weightMass.assign(n, 0.0);
        c.contributors.assign(n, 0);
        sized = true;
      }
      continue;
    }
    if (!sized) throw FormatError(path.string(), lineNo, "missing source_vertices header");
    std::size_t v = 0;
    Vec3 p;
    double w = 0.0;
    int k = 0;
    if (!(ss >> v >> p.x() >> p.y() >> p.z() >> w >> k) || v >= c.size() || k <= 0)
      throw FormatError(path.string(), lineNo, "expected srcIndex tx ty tz weightMass contributors");
    c.image[v] = p;
    c.weightMass[v] = w;
    c.contributors[v] = k;
  }
  if (!sized) throw FormatError(path.string(), lineNo, "missing source_vertices header");
  c.coverage = c.size() > 0 ? static_cast<double>(c.matched_count()) / static_cast<double>(c.size()) : 0.0;
  return c;
}

ErrorCurve error_curve(const std::vector<double>& errors) {
  ErrorCurve c;
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k < kCurveSamples; ++k) {
    const double t = kCurveMax * k / (kCurveSamples - 1);
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    c.thresholds.push_back(t);
    c.fractions.push_back(sorted.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(sorted.size()));
  }
  return c;
}

namespace {

double surface_distance(const Surface& T, LocalDijkstra& search, const Vec3& a, const Vec3& b) {
  const double chord = (a - b).norm();
  const VertexId va = T.index().nearest_one(a), vb = T.index().nearest_one(b);
  if (va == vb) return chord;
  double cap = 2.0 * chord + 4.0 * T.epsilon0();
  for (;;) {
    search.run(T.geodesic_graph(), va, cap);
    const double d = search.distance(vb);
    if (d < kInf) return std::max(chord, d);
    if (cap > 4.0 * T.diameter()) return kInf;
    cap *= 2.0;
  }
}

}  // namespace

double surface_distance(const Surface& T, const Vec3& a, const Vec3& b) {
  LocalDijkstra search(T.vertex_count());
  return surface_distance(T, search, a, b);
}

Evaluation evaluate_correspondence(const FinalCorrespondence& result, const GroundTruth& truth, const Surface& T) {
  Evaluation e;
  LocalDijkstra search(T.vertex_count());
  const double scale = 1.0 / std::sqrt(T.total_area());
  std::size_t matched = 0;
  for (std::size_t v = 0; v < result.size(); ++v) {
    if (!result.matched(static_cast<VertexId>(v))) continue;
    ++matched;
    if (v >= truth.has.size() || !truth.has[v]) continue;
    e.errors.push_back(surface_distance(T, search, result.image[v], truth.image[v]) * scale);
  }
  if (e.errors.empty()) throw PreconditionError("no matched vertex has ground truth");
  e.curve = error_curve(e.errors);
  std::vector<double> sorted = e.errors;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  e.summary.evaluated = n;
  e.summary.coverage = result.size() > 0 ? static_cast<double>(matched) / static_cast<double>(result.size()) : 0.0;
  e.summary.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double sum = 0.0;
  for (double x : e.errors) sum += x;
  e.summary.mean = sum / static_cast<double>(n);
  return e;
}

nlohmann::json evaluation_report(const Evaluation& e) {
  return {{"evaluated", e.summary.evaluated},
          {"coverage", e.summary.coverage},
          {"median", e.summary.median},
          {"mean", e.summary.mean},
          {"thresholds", e.curve.thresholds},
          {"fractions", e.curve.fractions}};
}

std::string error_curve_svg(const ErrorCurve& curve) {
  constexpr double W = 400, H = 300, L = 50, R = 20, Tm = 20, B = 40;
  auto px = [&](double t) { return L + (W - L - R) * t / kCurveMax; };
  auto py = [&](double f) { return H - B - (H - B - Tm) * f; };
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return std::string(buf);
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << L << "\" y2=\"" << Tm << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (W + L) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << "geodesic error / sqrt(area)</text>\n";
  o << "<text x=\"14\" y=\"" << (H - B + Tm) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 "
    << (H - B + Tm) / 2 << ")\" text-anchor=\"middle\">fraction</text>\n";
  o << "<polyline class=\"curve\" fill=\"none\" stroke=\"blue\" points=\"";
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    const double x = px(curve.thresholds[k]);
    if (k > 0) o << ' ' << num(x) << ',' << num(py(curve.fractions[k - 1]));
    o << (k > 0 ? " " : "") << num(x) << ',' << num(py(curve.fractions[k]));
  }
  o << "\"/>\n</svg>\n";
  return o.str();
}

std::vector<Rgb> checkerboard_colors(const Surface& S) {
  static constexpr Rgb palette[8] = {{31, 119, 180}, {44, 160, 44},  {148, 103, 189}, {23, 190, 207},
                                     {188, 189, 34}, {127, 127, 127}, {255, 187, 120}, {140, 86, 75}};
  const std::size_t n = S.vertex_count();
  std::vector<Rgb> out(n, Rgb{200, 200, 200});
  if (n == 0) return out;
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : S.positions()) mean += p;
  mean /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : S.positions()) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 a = eig.eigenvectors().col(2), b = eig.eigenvectors().col(1);
  double minA = kInf, minB = kInf, maxA = -kInf, maxB = -kInf;
  for (const Vec3& p : S.positions()) {
    const double x = (p - mean).dot(a), y = (p - mean).dot(b);
    minA = std::min(minA, x), maxA = std::max(maxA, x);
    minB = std::min(minB, y), maxB = std::max(maxB, y);
  }
  const double extent = std::max({maxA - minA, maxB - minB, 1e-300});
  for (std::size_t v = 0; v < n; ++v) {
    const Vec3 d = S.position(static_cast<VertexId>(v)) - mean;
    const int i = std::clamp(static_cast<int>(std::floor(8.0 * (d.dot(a) - minA) / extent)), 0, 7);
    const int j = std::clamp(static_cast<int>(std::floor(8.0 * (d.dot(b) - minB) / extent)), 0, 7);
    Rgb c = palette[i];
    if ((i + j) % 2)
      for (auto& ch : c) ch = static_cast<std::uint8_t>(ch / 2);
    out[v] = c;
  }
  return out;
}

std::vector<Rgb> transfer_colors(const FinalCorrespondence& result, const std::vector<Rgb>& sourceColors,
                                 const Surface& T) {
  std::vector<Vec3> pts;
  std::vector<VertexId> src;
  for (std::size_t v = 0; v < result.size(); ++v)
    if (result.matched(static_cast<VertexId>(v))) {
      pts.push_back(result.image[v]);
      src.push_back(static_cast<VertexId>(v));
    }
  std::vector<Rgb> out(T.vertex_count(), kUncovered);
  if (pts.empty()) return out;
  const PointIndex index(pts);
  const double r = 1.5 * T.epsilon0();
  for (VertexId y = 0; y < static_cast<VertexId>(T.vertex_count()); ++y) {
    const VertexId k = index.nearest_one(T.position(y));
    if ((pts[k] - T.position(y)).norm() <= r) out[y] = sourceColors[src[k]];
  }
  return out;
}

void export_visualization(const FinalCorrespondence& result, const Surface& S, const Surface& T, const fs::path& outDir,
                          const ErrorCurve* curve) {
  fs::create_directories(outDir);
  PlyExtras es, et;
  es.colors = checkerboard_colors(S);
  et.colors = transfer_colors(result, es.colors, T);
  write_ply(outDir / "source_colored.ply", S.positions(), S.faces(), S.normals(), es);
  write_ply(outDir / "target_colored.ply", T.positions(), T.faces(), T.normals(), et);
  if (curve) {
    std::ofstream o(outDir / "error_curve.svg");
    if (!o) throw Error("cannot write " + (outDir / "error_curve.svg").string());
    o << error_curve_svg(*curve);
  }
}

}  // namespace isogrow
