#include "helpers.hpp"

#include "isogrow/pipeline.hpp"
#include "isogrow/seeding.hpp"

#include <doctest.h>

#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

using namespace isogrow;
using namespace testing;

namespace {

FinalCorrespondence identity_result(const Surface& S) {
  FinalCorrespondence c;
  c.image = S.positions();
  c.weightMass.assign(S.vertex_count(), 1.0);
  c.contributors.assign(S.vertex_count(), 1);
  c.coverage = 1.0;
  return c;
}

GroundTruth identity_truth(const Surface& S) {
  return {S.positions(), std::vector<std::uint8_t>(S.vertex_count(), 1)};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Config seeded_config(const std::filesystem::path& seeds, unsigned threads) {
  Config c;
  c.seedsFile = seeds;
  c.threads = threads;
  return c;
}

}  // namespace

TEST_CASE("config presets, validation and json") {
  const Config clean = Config::preset("clean");
  const Config noisy = Config::preset("noisy");
  CHECK(clean.rMinFactor == 0.9);
  CHECK(clean.rMaxFactor == 1.7);
  CHECK(noisy.rMinFactor == 1.5);
  CHECK(noisy.rMaxFactor == 3.4);
  CHECK(clean.maxSeeds == 200);
  CHECK(clean.K == 10);
  CHECK(clean.omegaD == 400.0);
  CHECK(clean.clusterThreshold == 11.5);
  CHECK(clean.levels == 5);
  CHECK(clean.knn == 8);
  CHECK(clean.contours == 10);
  CHECK(clean.nuFactor == 0.5);
  CHECK_THROWS_AS(Config::preset("fancy"), PreconditionError);

  Config c = noisy;
  c.rho = 1.9;
  c.threads = 3;
  c.seedsFile = "seeds.txt";
  const Config back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.rho == 1.9);
  CHECK(back.seedsFile == std::filesystem::path("seeds.txt"));

  CHECK_NOTHROW(clean.validate());
  Config bad = clean;
  bad.rMaxFactor = 0.5;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = clean;
  bad.contours = 12;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = clean;
  bad.rho = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = clean;
  bad.maxSeeds = 0;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}

TEST_CASE("correspondence files round-trip") {
  const Surface S = grid_surface(7);
  FinalCorrespondence c = identity_result(S);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t v = 0; v < c.size(); ++v) {
    c.image[v] += Vec3(u(rng), u(rng), u(rng)) * 1e-3;
    c.weightMass[v] = std::exp(u(rng));
    c.contributors[v] = v % 3 == 0 ? 0 : 1 + static_cast<int>(v % 4);
  }
  const auto dir = temp_dir("correspondence");
  write_correspondence(dir / "c.txt", c);
  const FinalCorrespondence back = read_correspondence(dir / "c.txt");
  REQUIRE(back.size() == c.size());
  for (std::size_t v = 0; v < c.size(); ++v) {
    CHECK(back.contributors[v] == c.contributors[v]);
    if (!c.matched(static_cast<VertexId>(v))) continue;
    CHECK(back.image[v] == c.image[v]);
    CHECK(back.weightMass[v] == c.weightMass[v]);
  }
  CHECK(back.coverage == doctest::Approx(double(c.matched_count()) / double(c.size())));

  std::ofstream(dir / "bad.txt") << "0 1 2 3 1 1\n";
  CHECK_THROWS_AS(read_correspondence(dir / "bad.txt"), FormatError);
  std::ofstream(dir / "bad2.txt") << "# source_vertices 3\n5 0 0 0 1 1\n";
  CHECK_THROWS_AS(read_correspondence(dir / "bad2.txt"), FormatError);
}

TEST_CASE("error curve on a hand-made error list") {
  std::vector<double> errors;
  for (int i = 0; i < 10; ++i) errors.push_back(0.05 * i);
  const ErrorCurve c = error_curve(errors);
  REQUIRE(c.thresholds.size() == std::size_t(kCurveSamples));
  CHECK(c.thresholds.front() == 0.0);
  CHECK(c.thresholds.back() == doctest::Approx(kCurveMax));
  for (int k = 0; k < kCurveSamples; ++k) {
    const double t = c.thresholds[k];
    int count = 0;
    for (double e : errors) count += e <= t;
    CHECK(c.fractions[k] == doctest::Approx(count / 10.0));
  }
  CHECK(c.fractions[0] == doctest::Approx(0.1));
  CHECK(c.fractions[10] == doctest::Approx(0.2));
  CHECK(c.fractions.back() == doctest::Approx(1.0));
  for (int k = 1; k < kCurveSamples; ++k) CHECK(c.fractions[k] >= c.fractions[k - 1]);
}

TEST_CASE("evaluation of exact and offset results") {
  const int n = 21;
  const Surface T = grid_surface(n);
  const double e0 = T.epsilon0();

  SUBCASE("exact") {
    const Evaluation ev = evaluate_correspondence(identity_result(T), identity_truth(T), T);
    CHECK(ev.summary.evaluated == T.vertex_count());
    CHECK(ev.summary.coverage == 1.0);
    CHECK(ev.summary.median == 0.0);
    CHECK(ev.summary.mean == 0.0);
    for (double f : ev.curve.fractions) CHECK(f == 1.0);
  }

  SUBCASE("constant offset gives a single step") {
    FinalCorrespondence c = identity_result(T);
    GroundTruth truth = identity_truth(T);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const VertexId v = grid_vertex(n, i, j);
        if (i + 2 < n) {
          c.image[v] = T.position(grid_vertex(n, i + 2, j));
        } else {
          c.contributors[v] = 0;
        }
      }
    const double g = 2.0 * e0 / std::sqrt(T.total_area());
    const Evaluation ev = evaluate_correspondence(c, truth, T);
    CHECK(ev.summary.evaluated == std::size_t((n - 2) * n));
    for (double e : ev.errors) CHECK(e == doctest::Approx(g).epsilon(1e-9));
    for (int k = 0; k < kCurveSamples; ++k)
      CHECK(ev.curve.fractions[k] == (ev.curve.thresholds[k] + 1e-12 >= g ? 1.0 : 0.0));

    // The vertical segment of the staircase sits at the first sample past g.
    const std::string svg = error_curve_svg(ev.curve);
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, std::regex("class=\"curve\"[^>]*points=\"([^\"]*)\"")));
    std::istringstream pts(m[1].str());
    std::string tok;
    double stepX = -1.0, prevY = 1e9;
    while (pts >> tok) {
      const auto comma = tok.find(',');
      const double x = std::stod(tok.substr(0, comma)), y = std::stod(tok.substr(comma + 1));
      if (prevY < 1e9 && y < prevY - 100.0) stepX = x;
      prevY = y;
    }
    const double spacing = 330.0 / (kCurveSamples - 1);
    CHECK(stepX >= 50.0 + 330.0 * g / kCurveMax - 0.01);
    CHECK(stepX <= 50.0 + 330.0 * g / kCurveMax + spacing + 0.01);
  }

  SUBCASE("no ground truth") {
    GroundTruth none{T.positions(), std::vector<std::uint8_t>(T.vertex_count(), 0)};
    CHECK_THROWS_AS(evaluate_correspondence(identity_result(T), none, T), PreconditionError);
  }
}

TEST_CASE("surface distance") {
  const Surface T = grid_surface(21);
  const double e0 = T.epsilon0();
  CHECK(surface_distance(T, T.position(0), T.position(0)) == 0.0);
  CHECK(surface_distance(T, T.position(0), T.position(5)) == doctest::Approx(5 * e0));
  const Vec3 a = T.position(grid_vertex(21, 10, 10));
  CHECK(surface_distance(T, a, a + Vec3(0.3 * e0, 0, 0)) == doctest::Approx(0.3 * e0));
}

TEST_CASE("color transfer") {
  const Surface S = grid_surface(17);
  const auto colors = checkerboard_colors(S);
  REQUIRE(colors.size() == S.vertex_count());
  std::set<Rgb> distinct(colors.begin(), colors.end());
  CHECK(distinct.size() >= 8);
  CHECK(distinct.count(kUncovered) == 0);

  SUBCASE("identity reproduces the source colors") {
    CHECK(transfer_colors(identity_result(S), colors, S) == colors);
  }
  SUBCASE("uncovered target vertices are red") {
    FinalCorrespondence c = identity_result(S);
    const Vec3 hole(0.5, 0.5, 0.0);
    for (VertexId v = 0; v < VertexId(S.vertex_count()); ++v)
      if ((S.position(v) - hole).norm() < 0.25) c.contributors[v] = 0;
    const auto out = transfer_colors(c, colors, S);
    for (VertexId v = 0; v < VertexId(S.vertex_count()); ++v) {
      const double r = (S.position(v) - hole).norm();
      if (r < 0.25 - 1.5 * S.epsilon0() - 1e-9) CHECK(out[v] == kUncovered);
      if (r >= 0.25) CHECK(out[v] == colors[v]);
    }
  }
  SUBCASE("export writes colored plys") {
    const auto dir = temp_dir("export");
    const ErrorCurve curve = error_curve({0.0, 0.1});
    export_visualization(identity_result(S), S, S, dir, &curve);
    CHECK(std::filesystem::exists(dir / "source_colored.ply"));
    CHECK(std::filesystem::exists(dir / "target_colored.ply"));
    CHECK(read_text(dir / "error_curve.svg").find("class=\"curve\"") != std::string::npos);
    CHECK(read_text(dir / "target_colored.ply").find("property uchar red") != std::string::npos);
  }
}

TEST_CASE("truth seeds are oriented consistently") {
  const auto pair = generate_synthetic(SyntheticKind::plane_hill, 21);
  const auto seeds = truth_seeds(pair, 6);
  REQUIRE(seeds.size() == 6);
  for (const auto& s : seeds) {
    CHECK(s.ds.norm() == doctest::Approx(1.0));
    CHECK(s.dt.norm() == doctest::Approx(1.0));
    CHECK(pair.isometricMask[s.sVertex]);
    CHECK((s.t - pair.groundTruth[s.sVertex]).norm() == 0.0);
    // Far from the hill the truth is the identity.
    if (hill_height(s.s.x(), s.s.y()) < 1e-6) {
      CHECK((s.dt - s.ds).norm() < 1e-3);
    }
  }
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j) CHECK(seeds[i].sVertex != seeds[j].sVertex);
}

TEST_CASE("file pipeline") {
  const auto dir = temp_dir("file_pipeline");
  const auto pair = generate_synthetic(SyntheticKind::plane, 13);
  write_synthetic(pair, dir / "in");
  REQUIRE(std::filesystem::exists(dir / "in" / "seeds.txt"));
  const Config config = seeded_config(dir / "in" / "seeds.txt", 1);

  SUBCASE("a corrupt input writes nothing") {
    std::ofstream(dir / "in" / "broken.obj") << "v 0 0 0\nv 1 0\nf 1 2 3\n";
    CHECK_THROWS_AS(run_pipeline(config, dir / "in" / "broken.obj", dir / "in" / "T.obj", dir / "out_broken"),
                    FormatError);
    CHECK_FALSE(std::filesystem::exists(dir / "out_broken"));
  }

  SUBCASE("outputs and timings") {
    const PipelineResult r = run_pipeline(config, dir / "in" / "S.obj", dir / "in" / "T.obj", dir / "out");
    REQUIRE(r.status == PipelineStatus::ok);
    for (auto name : {"correspondence.txt", "clusters.json", "timing.json"})
      CHECK(std::filesystem::exists(dir / "out" / name));
    std::vector<std::string> stages;
    double sum = 0.0;
    for (const auto& t : r.timings) {
      stages.push_back(t.stage);
      CHECK(t.seconds >= 0.0);
      sum += t.seconds;
    }
    const std::vector<std::string> expected = {"load", "surface", "seeding", "growing", "clustering", "merging",
                                               "output"};
    CHECK(stages == expected);
    CHECK(r.total_seconds() == doctest::Approx(sum));
    const auto timing = nlohmann::json::parse(read_text(dir / "out" / "timing.json"));
    CHECK(timing["totalSeconds"].get<double>() == doctest::Approx(sum));

    const FinalCorrespondence back = read_correspondence(dir / "out" / "correspondence.txt");
    CHECK(back.matched_count() == r.correspondence.matched_count());
    const GroundTruth truth = read_ground_truth(dir / "in" / "truth.txt", back.size());
    const Evaluation ev = evaluate_correspondence(back, truth, pair.T);
    CHECK(ev.summary.coverage > 0.9);
    CHECK(ev.summary.median < 0.1 * pair.T.epsilon0());
  }

  SUBCASE("a seed that grows nothing reports no map") {
    OrientedPointMatch far;
    far.s = Vec3(10, 10, 10);
    far.t = Vec3(10, 10, 10);
    write_seed_file(dir / "far.txt", {far});
    const PipelineResult r =
        run_pipeline(seeded_config(dir / "far.txt", 1), dir / "in" / "S.obj", dir / "in" / "T.obj", dir / "out_none");
    CHECK(r.status == PipelineStatus::no_map);
    CHECK(std::filesystem::exists(dir / "out_none" / "report.json"));
    CHECK_FALSE(std::filesystem::exists(dir / "out_none" / "correspondence.txt"));
  }
}

TEST_CASE("in-memory pipeline is deterministic across thread counts") {
  const auto dir = temp_dir("determinism");
  const auto pair = generate_synthetic(SyntheticKind::plane_hill, 15);
  write_seed_file(dir / "seeds.txt", truth_seeds(pair, 10));
  const PipelineResult a = run_pipeline(seeded_config(dir / "seeds.txt", 1), pair.S, pair.T);
  const PipelineResult b = run_pipeline(seeded_config(dir / "seeds.txt", 3), pair.S, pair.T);
  REQUIRE(a.status == PipelineStatus::ok);
  REQUIRE(b.status == PipelineStatus::ok);
  write_correspondence(dir / "a.txt", a.correspondence);
  write_correspondence(dir / "b.txt", b.correspondence);
  CHECK(read_text(dir / "a.txt") == read_text(dir / "b.txt"));
  CHECK(cluster_report(a.clustering) == cluster_report(b.clustering));
  CHECK(a.seedMapSizes == b.seedMapSizes);
}

TEST_CASE("feature seeding matches a bumpy surface to itself") {
  const auto pair = generate_synthetic(SyntheticKind::plane_peaks, 25);
  Config config;
  config.maxSeeds = 8;
  config.threads = 1;
  const PipelineResult r = run_pipeline(config, pair.T, pair.T);
  REQUIRE(r.status == PipelineStatus::ok);
  CHECK(r.sourceFeatures > 0);
  CHECK(r.matchClusters > 0);
  const Evaluation ev = evaluate_correspondence(r.correspondence, identity_truth(pair.T), pair.T);
  CHECK(ev.summary.coverage > 0.5);
  CHECK(ev.summary.median * std::sqrt(pair.T.total_area()) < 0.5 * pair.T.epsilon0());
}
