#pragma once

#include "isogrow/synthetic.hpp"

#include <Eigen/Geometry>

#include <filesystem>
#include <random>
#include <string>

namespace testing {

using isogrow::Surface;
using isogrow::Vec3;
using isogrow::VertexId;

inline Surface grid_surface(int n) {
  auto m = isogrow::plane_grid(n);
  return Surface::from_mesh(m.vertices, m.faces);
}

inline VertexId grid_vertex(int n, int i, int j) { return j * n + i; }

inline Surface sphere_surface(int level = 4) {
  auto m = isogrow::icosphere(level);
  return Surface::from_mesh(m.vertices, m.faces);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("isogrow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::Isometry3d sample_rigid_motion(unsigned seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Isometry3d m = Eigen::Isometry3d::Identity();
  m.rotate(Eigen::AngleAxisd(2.0 + u(rng), Vec3(u(rng), u(rng), u(rng)).normalized()));
  m.pretranslate(Vec3(u(rng), u(rng), u(rng)) * 3.0);
  return m;
}

}  // namespace testing
