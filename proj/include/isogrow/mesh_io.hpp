#pragma once

#include "isogrow/surface.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace isogrow {

enum class SurfaceFormat { obj, ply, xyz };

// Picks the format from the file extension (case-insensitive).
SurfaceFormat format_from_path(const std::filesystem::path& path);
SurfaceFormat parse_format(const std::string& name);

struct RawSurface {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // empty, or one per vertex
  std::vector<std::vector<VertexId>> faces;
};

RawSurface read_raw_surface(const std::filesystem::path& path, SurfaceFormat format);

// Parses a file into a Surface. Faces make it a mesh; otherwise a point cloud.
Surface load_surface(const std::filesystem::path& path, SurfaceFormat format, int knn = Surface::kDefaultKnn);
Surface load_surface(const std::filesystem::path& path, int knn = Surface::kDefaultKnn);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double x);

void write_obj(const std::filesystem::path& path, const std::vector<Vec3>& vertices,
               const std::vector<std::vector<VertexId>>& faces, const std::vector<Vec3>& normals = {});
void write_xyz(const std::filesystem::path& path, const std::vector<Vec3>& vertices,
               const std::vector<Vec3>& normals = {});

struct PlyExtras {
  std::vector<std::array<std::uint8_t, 3>> colors;    // optional, per vertex
  std::map<std::string, std::vector<double>> scalars;  // optional named per-vertex properties
};

void write_ply(const std::filesystem::path& path, const std::vector<Vec3>& vertices,
               const std::vector<std::vector<VertexId>>& faces, const std::vector<Vec3>& normals = {},
               const PlyExtras& extras = {}, bool binary = false);

}  // namespace isogrow
