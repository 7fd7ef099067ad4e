#include "isogrow/pipeline.hpp"
#include "isogrow/seeding.hpp"
#include "isogrow/synthetic.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace isogrow;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<Vec3>& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t(3)});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) a(i, k) = pts[i][k];
  return out;
}

std::vector<Vec3> from_array(const Array& arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 3) throw PreconditionError("expected an (n, 3) array");
  auto a = arr.unchecked<2>();
  std::vector<Vec3> pts(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[i] = Vec3(a(i, 0), a(i, 1), a(i, 2));
  return pts;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

template <class T>
py::array_t<T> to_numpy(const std::vector<T>& v) {
  return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dense partial near-isometric correspondences by metric region growing";

  py::register_exception<Error>(m, "Error");
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<Surface>(m, "Surface")
      .def_static(
          "from_mesh",
          [](const Array& vertices, std::vector<std::vector<VertexId>> faces) {
            return Surface::from_mesh(from_array(vertices), std::move(faces));
          },
          py::arg("vertices"), py::arg("faces"))
      .def_static(
          "from_points", [](const Array& vertices) { return Surface::from_point_cloud(from_array(vertices)); },
          py::arg("vertices"))
      .def_static(
          "load", [](const std::filesystem::path& p, int knn) { return load_surface(p, knn); }, py::arg("path"),
          py::arg("knn") = Surface::kDefaultKnn)
      .def_property_readonly("vertex_count", &Surface::vertex_count)
      .def_property_readonly("positions", [](const Surface& s) { return to_array(s.positions()); })
      .def_property_readonly("normals", [](const Surface& s) { return to_array(s.normals()); })
      .def_property_readonly("epsilon0", &Surface::epsilon0)
      .def_property_readonly("total_area", &Surface::total_area)
      .def_property_readonly("diameter", &Surface::diameter);

  py::class_<SyntheticPair>(m, "SyntheticPair")
      .def_readonly("S", &SyntheticPair::S)
      .def_readonly("T", &SyntheticPair::T)
      .def_property_readonly("ground_truth", [](const SyntheticPair& p) { return to_array(p.groundTruth); })
      .def_property_readonly("has_truth", [](const SyntheticPair& p) { return to_numpy(p.hasTruth); })
      .def_property_readonly("isometric_mask", [](const SyntheticPair& p) { return to_numpy(p.isometricMask); })
      .def("write", [](const SyntheticPair& p, const std::filesystem::path& dir) { write_synthetic(p, dir); });

  m.def(
      "generate_synthetic",
      [](const std::string& kind, int resolution, double noise, std::uint64_t seed) {
        SyntheticOptions o;
        o.noise = noise;
        o.seed = seed;
        return generate_synthetic(parse_synthetic_kind(kind), resolution, o);
      },
      py::arg("kind"), py::arg("resolution") = 51, py::arg("noise") = 0.0, py::arg("seed") = 1);

  m.def(
      "write_truth_seeds",
      [](const SyntheticPair& p, const std::filesystem::path& path, int count) {
        const auto seeds = truth_seeds(p, count);
        write_seed_file(path, seeds);
        return seeds.size();
      },
      py::arg("pair"), py::arg("path"), py::arg("count") = 8);

  py::class_<Config>(m, "Config")
      .def(py::init<>())
      .def_static("preset", &Config::preset)
      .def_readwrite("r_min_factor", &Config::rMinFactor)
      .def_readwrite("r_max_factor", &Config::rMaxFactor)
      .def_readwrite("rho", &Config::rho)
      .def_readwrite("nu_factor", &Config::nuFactor)
      .def_readwrite("max_seeds", &Config::maxSeeds)
      .def_readwrite("K", &Config::K)
      .def_readwrite("omega_d", &Config::omegaD)
      .def_readwrite("cluster_threshold", &Config::clusterThreshold)
      .def_readwrite("levels", &Config::levels)
      .def_readwrite("knn", &Config::knn)
      .def_readwrite("lambda_ds_factor", &Config::lambdaDsFactor)
      .def_readwrite("batch_size", &Config::batchSize)
      .def_readwrite("threads", &Config::threads)
      .def_readwrite("cache_dir", &Config::cacheDir)
      .def_readwrite("seeds_file", &Config::seedsFile)
      .def("validate", &Config::validate)
      .def("to_dict", [](const Config& c) { return to_python(to_json(c)); });

  py::class_<FinalCorrespondence>(m, "Correspondence")
      .def_property_readonly("images", [](const FinalCorrespondence& c) { return to_array(c.image); })
      .def_property_readonly("weight_mass", [](const FinalCorrespondence& c) { return to_numpy(c.weightMass); })
      .def_property_readonly("contributors", [](const FinalCorrespondence& c) { return to_numpy(c.contributors); })
      .def_readonly("coverage", &FinalCorrespondence::coverage)
      .def_readonly("conflicts", &FinalCorrespondence::conflicts)
      .def("__len__", &FinalCorrespondence::size)
      .def("save", [](const FinalCorrespondence& c, const std::filesystem::path& p) { write_correspondence(p, c); })
      .def_static("load", [](const std::filesystem::path& p) { return read_correspondence(p); });

  py::class_<PipelineResult>(m, "PipelineResult")
      .def_property_readonly("ok", [](const PipelineResult& r) { return r.status == PipelineStatus::ok; })
      .def_readonly("correspondence", &PipelineResult::correspondence)
      .def_property_readonly("clusters", [](const PipelineResult& r) { return to_python(cluster_report(r.clustering)); })
      .def_property_readonly("timings", [](const PipelineResult& r) { return to_python(timing_report(r)); })
      .def_property_readonly("map_count", [](const PipelineResult& r) { return r.maps.size(); })
      .def_readonly("seed_map_sizes", &PipelineResult::seedMapSizes)
      .def_readonly("source_features", &PipelineResult::sourceFeatures)
      .def_readonly("target_features", &PipelineResult::targetFeatures);

  m.def(
      "match", [](const Config& c, const Surface& S, const Surface& T) { return run_pipeline(c, S, T); },
      py::arg("config"), py::arg("S"), py::arg("T"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "match_files",
      [](const Config& c, const std::filesystem::path& s, const std::filesystem::path& t,
         const std::filesystem::path& out) { return run_pipeline(c, s, t, out); },
      py::arg("config"), py::arg("S"), py::arg("T"), py::arg("out"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "evaluate",
      [](const FinalCorrespondence& c, const Array& truth, const std::vector<std::uint8_t>& has, const Surface& T) {
        return to_python(evaluation_report(evaluate_correspondence(c, {from_array(truth), has}, T)));
      },
      py::arg("correspondence"), py::arg("truth"), py::arg("has_truth"), py::arg("T"));
  m.def(
      "error_curve",
      [](const std::vector<double>& errors) {
        const ErrorCurve c = error_curve(errors);
        return py::make_tuple(c.thresholds, c.fractions);
      },
      py::arg("errors"));
}
