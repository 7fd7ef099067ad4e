#include "isogrow/pipeline.hpp"
#include "isogrow/synthetic.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace isogrow;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNoMap = 3;

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw FormatError(p.string(), 0, "no such file");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream o(path);
  if (!o) throw Error("cannot write " + path.string());
  o << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense partial near-isometric correspondences by metric region growing"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* match = app.add_subcommand("match", "Match surface S to surface T");
  std::string pathS, pathT, outDir, preset = "clean", seeds, cacheDir, configFile;
  double rho = 1.0, nuFactor = 0.5;
  unsigned threads = 0;
  bool exportVis = false;
  match->add_option("S", pathS, "Source surface (obj, ply, xyz)")->required();
  match->add_option("T", pathT, "Target surface (obj, ply, xyz)")->required();
  match->add_option("--out", outDir, "Output directory")->required();
  match->add_option("--config", configFile, "JSON config; flags given explicitly override it");
  match->add_option("--preset", preset, "Descriptor radii preset")->check(CLI::IsMember({"clean", "noisy"}));
  auto* rhoOpt = match->add_option("--rho", rho, "Clustering threshold");
  auto* nuOpt = match->add_option("--nu-factor", nuFactor, "Stretch bound in units of epsilon0");
  match->add_option("--seeds", seeds, "Seed override file");
  match->add_option("--cache-dir", cacheDir, "Hierarchy cache directory");
  match->add_option("--threads", threads, "Worker threads, 0 for all cores");
  match->add_flag("--export", exportVis, "Also write colored PLYs");

  auto* eval = app.add_subcommand("eval", "Evaluate a correspondence against ground truth");
  std::string resultPath, truthPath, evalT, evalOut;
  eval->add_option("result", resultPath, "correspondence.txt")->required();
  eval->add_option("truth", truthPath, "Ground truth (srcIndex tx ty tz per line)")->required();
  eval->add_option("T", evalT, "Target surface")->required();
  eval->add_option("--out", evalOut, "Output directory")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic surface pair with ground truth");
  std::string kind, synthOut;
  int res = 51;
  double noise = 0.0;
  std::uint64_t noiseSeed = 1;
  synth->add_option("kind", kind, "plane, plane_peaks, plane_hill, sphere, cylinder or plane_hole")->required();
  synth->add_option("--res", res, "Grid resolution");
  synth->add_option("--out", synthOut, "Output directory")->required();
  synth->add_option("--noise", noise, "Gaussian vertex jitter");
  synth->add_option("--noise-seed", noiseSeed, "Jitter random seed");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*match) {
      Config config = Config::preset(preset);
      if (!configFile.empty()) {
        require_file(configFile);
        std::ifstream in(configFile);
        config = config_from_json(nlohmann::json::parse(in));
      }
      if (*rhoOpt) config.rho = rho;
      if (*nuOpt) config.nuFactor = nuFactor;
      if (!seeds.empty()) {
        require_file(seeds);
        config.seedsFile = seeds;
      }
      if (!cacheDir.empty()) config.cacheDir = cacheDir;
      if (threads > 0) config.threads = threads;
      try {
        config.validate();
        require_file(pathS);
        require_file(pathT);
      } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return kExitInput;
      }
      PipelineResult r;
      try {
        r = run_pipeline(config, pathS, pathT, outDir);
      } catch (const FormatError& e) {
        spdlog::error("{}", e.what());
        return kExitInput;
      } catch (const DegenerateInputError& e) {
        spdlog::error("{}", e.what());
        return kExitInput;
      }
      if (r.status == PipelineStatus::no_map) {
        spdlog::error("no partial map found; see {}", (fs::path(outDir) / "report.json").string());
        return kExitNoMap;
      }
      spdlog::info("{} maps from {} seeds, {} clusters, coverage {:.4f}, {:.1f} s", r.maps.size(), r.seeds.size(),
                   r.clustering.clusters.size(), r.correspondence.coverage, r.total_seconds());
      if (exportVis) {
        const Surface S = load_surface(pathS, config.knn), T = load_surface(pathT, config.knn);
        export_visualization(r.correspondence, S, T, outDir);
      }
      return 0;
    }
    if (*eval) {
      FinalCorrespondence c;
      GroundTruth truth;
      Surface T;
      try {
        require_file(resultPath);
        require_file(truthPath);
        require_file(evalT);
        c = read_correspondence(resultPath);
        truth = read_ground_truth(truthPath, c.size());
        T = load_surface(evalT);
      } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return kExitInput;
      }
      const Evaluation ev = evaluate_correspondence(c, truth, T);
      fs::create_directories(evalOut);
      write_json(fs::path(evalOut) / "evaluation.json", evaluation_report(ev));
      std::ofstream svg(fs::path(evalOut) / "error_curve.svg");
      svg << error_curve_svg(ev.curve);
      spdlog::info("evaluated {} vertices: coverage {:.4f}, median {:.5f}, mean {:.5f}", ev.summary.evaluated,
                   ev.summary.coverage, ev.summary.median, ev.summary.mean);
      return 0;
    }
    if (*synth) {
      SyntheticKind k;
      try {
        k = parse_synthetic_kind(kind);
      } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return kExitInput;
      }
      SyntheticOptions opts;
      opts.noise = noise;
      opts.seed = noiseSeed;
      const auto pair = generate_synthetic(k, res, opts);
      fs::create_directories(synthOut);
      write_synthetic(pair, synthOut);
      spdlog::info("wrote {} ({} and {} vertices) to {}", to_string(k), pair.S.vertex_count(), pair.T.vertex_count(),
                   synthOut);
      return 0;
    }
  } catch (const PreconditionError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
