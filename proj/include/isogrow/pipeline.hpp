#pragma once

#include "isogrow/clustering.hpp"
#include "isogrow/merging.hpp"
#include "isogrow/partial_map.hpp"
#include "isogrow/surface.hpp"
#include "isogrow/synthetic.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace isogrow {

struct Config {
  double rMinFactor = 0.9;
  double rMaxFactor = 1.7;
  double rho = 1.0;
  double nuFactor = 0.5;
  int maxSeeds = 200;
  int K = 10;
  double omegaD = 400.0;
  double clusterThreshold = 11.5;
  int levels = 5;
  int knn = 8;
  int contours = 10;
  double lambdaDsFactor = 0.2;
  int batchSize = 8;     // seeds grown per round; fixed so output is independent of threads
  unsigned threads = 0;  // 0 for the available parallelism
  std::filesystem::path cacheDir;
  std::filesystem::path seedsFile;

  // "clean" or "noisy" descriptor radii.
  static Config preset(const std::string& name);
  // Throws PreconditionError on invalid values.
  void validate() const;
  unsigned worker_count() const;
};

nlohmann::json to_json(const Config& c);
Config config_from_json(const nlohmann::json& j);

enum class PipelineStatus { ok, no_map };

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  PipelineStatus status = PipelineStatus::ok;
  FinalCorrespondence correspondence;
  ClusteringResult clustering;
  std::vector<PartialMap> maps;
  std::vector<OrientedPointMatch> seeds;  // every seed grown, in order; map ids index this
  std::vector<std::size_t> seedMapSizes;  // vertices grown from each seed
  std::vector<StageTiming> timings;
  std::size_t sourceFeatures = 0;
  std::size_t targetFeatures = 0;
  std::size_t candidateMatches = 0;
  std::size_t matchClusters = 0;

  double total_seconds() const;
};

// In-memory pipeline on loaded surfaces. No files are written.
PipelineResult run_pipeline(const Config& config, const Surface& S, const Surface& T);

// Loads both inputs, runs, and writes correspondence.txt, clusters.json and
// timing.json to outDir (or report.json when no map was grown). Nothing is
// written when an input fails to load.
PipelineResult run_pipeline(const Config& config, const std::filesystem::path& pathS,
                            const std::filesystem::path& pathT, const std::filesystem::path& outDir);

// Text format: '#' header lines, then `srcIndex tx ty tz weightMass contributors` per matched vertex.
void write_correspondence(const std::filesystem::path& path, const FinalCorrespondence& c);
FinalCorrespondence read_correspondence(const std::filesystem::path& path);

nlohmann::json timing_report(const PipelineResult& r);

inline constexpr int kCurveSamples = 100;
inline constexpr double kCurveMax = 0.5;

struct ErrorCurve {
  std::vector<double> thresholds;
  std::vector<double> fractions;
};

struct EvaluationSummary {
  std::size_t evaluated = 0;
  double coverage = 0.0;
  double median = 0.0;
  double mean = 0.0;
};

struct Evaluation {
  ErrorCurve curve;
  EvaluationSummary summary;
  std::vector<double> errors;  // per evaluated vertex, in vertex order
};

// Cumulative fraction of errors <= each threshold, at kCurveSamples uniform thresholds in [0, kCurveMax].
ErrorCurve error_curve(const std::vector<double>& normalizedErrors);

// Geodesic distance between two points near T: graph distance between their
// nearest vertices, or the chord when they share a vertex or are closer.
double surface_distance(const Surface& T, const Vec3& a, const Vec3& b);

// Errors are geodesic distances on T divided by sqrt(area(T)). Throws
// PreconditionError when no matched vertex has ground truth.
Evaluation evaluate_correspondence(const FinalCorrespondence& result, const GroundTruth& truth, const Surface& T);
nlohmann::json evaluation_report(const Evaluation& e);

// Staircase plot of the curve.
std::string error_curve_svg(const ErrorCurve& curve);

using Rgb = std::array<std::uint8_t, 3>;
inline constexpr Rgb kUncovered{255, 0, 0};

// 8 x 8 checkerboard over the bounding square of S in its principal plane.
std::vector<Rgb> checkerboard_colors(const Surface& S);
// Colors of T: the color of the S vertex whose image is nearest, or red when
// no image lies within 1.5 epsilon0 of T.
std::vector<Rgb> transfer_colors(const FinalCorrespondence& result, const std::vector<Rgb>& sourceColors,
                                 const Surface& T);

// Writes source_colored.ply, target_colored.ply and, with a curve, error_curve.svg.
void export_visualization(const FinalCorrespondence& result, const Surface& S, const Surface& T,
                          const std::filesystem::path& outDir, const ErrorCurve* curve = nullptr);

}  // namespace isogrow
