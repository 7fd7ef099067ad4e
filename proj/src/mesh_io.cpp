#include "isogrow/mesh_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace isogrow {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size() && std::isfinite(out);
}

bool parse_long(std::string_view tok, long& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw FormatError(path.string(), 0, "cannot open file");
  return in;
}

RawSurface read_obj(const fs::path& path) {
  auto in = open_in(path);
  RawSurface raw;
  std::vector<Vec3> vn;
  std::vector<std::vector<long>> faceNormalRefs;
  std::string line;
  std::size_t lineNo = 0;
  auto fail = [&](const std::string& what) { throw FormatError(path.string(), lineNo, what); };
  while (std::getline(in, line)) {
    ++lineNo;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0].front() == '#') continue;
    const auto& key = toks[0];
    if (key == "v") {
      if (toks.size() < 4) fail("vertex record needs 3 coordinates");
      Vec3 p;
      for (int k = 0; k < 3; ++k)
        if (!parse_double(toks[k + 1], p[k])) fail("bad vertex coordinate");
      raw.vertices.push_back(p);
    } else if (key == "vn") {
      if (toks.size() < 4) fail("normal record needs 3 components");
      Vec3 p;
      for (int k = 0; k < 3; ++k)
        if (!parse_double(toks[k + 1], p[k])) fail("bad normal component");
      vn.push_back(p);
    } else if (key == "f") {
      if (toks.size() < 4) fail("face needs at least 3 vertices");
      std::vector<VertexId> face;
      std::vector<long> nrefs;
      for (std::size_t k = 1; k < toks.size(); ++k) {
        const auto tok = toks[k];
        const auto slash = tok.find('/');
        long idx = 0;
        if (!parse_long(tok.substr(0, slash), idx) || idx == 0) fail("bad face index");
        const long n = static_cast<long>(raw.vertices.size());
        if (idx < 0) idx = n + idx + 1;
        if (idx < 1 || idx > n) fail("face index out of range");
        face.push_back(static_cast<VertexId>(idx - 1));
        long nref = 0;
        if (slash != std::string_view::npos) {
          const auto rest = tok.substr(slash + 1);
          const auto slash2 = rest.find('/');
          if (slash2 != std::string_view::npos && slash2 + 1 < rest.size()) {
            if (!parse_long(rest.substr(slash2 + 1), nref)) fail("bad face normal index");
            if (nref < 0) nref = static_cast<long>(vn.size()) + nref + 1;
          }
        }
        nrefs.push_back(nref);
      }
      raw.faces.push_back(std::move(face));
      faceNormalRefs.push_back(std::move(nrefs));
    }
    // Other records (vt, g, o, s, usemtl, ...) carry nothing we use.
  }
  if (!vn.empty()) {
    if (vn.size() == raw.vertices.size()) {
      raw.normals = vn;
    } else {
      // Per-corner normal references; accumulate onto vertices.
      std::vector<Vec3> acc(raw.vertices.size(), Vec3::Zero());
      bool any = false;
      for (std::size_t f = 0; f < raw.faces.size(); ++f) {
        for (std::size_t c = 0; c < raw.faces[f].size(); ++c) {
          const long r = faceNormalRefs[f][c];
          if (r >= 1 && r <= static_cast<long>(vn.size())) {
            acc[raw.faces[f][c]] += vn[r - 1].normalized();
            any = true;
          }
        }
      }
      if (any && std::all_of(acc.begin(), acc.end(), [](const Vec3& n) { return n.norm() > 0; })) raw.normals = acc;
    }
  }
  return raw;
}

RawSurface read_xyz(const fs::path& path) {
  auto in = open_in(path);
  RawSurface raw;
  std::string line;
  std::size_t lineNo = 0;
  bool withNormals = false;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0].front() == '#') continue;
    if (toks.size() != 3 && toks.size() != 6)
      throw FormatError(path.string(), lineNo, "expected 3 or 6 values per line");
    if (first) {
      withNormals = toks.size() == 6;
      first = false;
    } else if ((toks.size() == 6) != withNormals) {
      throw FormatError(path.string(), lineNo, "inconsistent column count");
    }
    double v[6];
    for (std::size_t k = 0; k < toks.size(); ++k)
      if (!parse_double(toks[k], v[k])) throw FormatError(path.string(), lineNo, "bad number");
    raw.vertices.emplace_back(v[0], v[1], v[2]);
    if (withNormals) raw.normals.emplace_back(v[3], v[4], v[5]);
  }
  return raw;
}

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

bool ply_type(std::string_view name, PlyType& t) {
  static const std::pair<const char*, PlyType> table[] = {
      {"char", PlyType::i8},    {"int8", PlyType::i8},     {"uchar", PlyType::u8},   {"uint8", PlyType::u8},
      {"short", PlyType::i16},  {"int16", PlyType::i16},   {"ushort", PlyType::u16}, {"uint16", PlyType::u16},
      {"int", PlyType::i32},    {"int32", PlyType::i32},   {"uint", PlyType::u32},   {"uint32", PlyType::u32},
      {"float", PlyType::f32},  {"float32", PlyType::f32}, {"double", PlyType::f64}, {"float64", PlyType::f64}};
  for (const auto& [n, ty] : table)
    if (name == n) {
      t = ty;
      return true;
    }
  return false;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

double ply_decode(PlyType t, const unsigned char* p) {
  // Little-endian host assumed for binary_little_endian payloads.
  switch (t) {
    case PlyType::i8: return static_cast<double>(*reinterpret_cast<const std::int8_t*>(p));
    case PlyType::u8: return static_cast<double>(*p);
    case PlyType::i16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::u16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::i32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::u32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::f32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::f64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool isList = false;
  PlyType countType = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

RawSurface read_ply(const fs::path& path) {
  auto in = open_in(path, true);
  std::string line;
  std::size_t lineNo = 0;
  auto fail = [&](const std::string& what) { throw FormatError(path.string(), lineNo, what); };
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") fail("missing 'ply' magic");
  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    if (!next_line()) fail("unterminated header");
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "end_header") break;
    if (toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "format") {
      if (toks.size() < 2) fail("bad format line");
      if (toks[1] == "ascii") binary = false;
      else if (toks[1] == "binary_little_endian") binary = true;
      else fail("unsupported PLY encoding: " + std::string(toks[1]));
    } else if (toks[0] == "element") {
      if (toks.size() != 3) fail("bad element line");
      long c = 0;
      if (!parse_long(toks[2], c) || c < 0) fail("bad element count");
      elements.push_back({std::string(toks[1]), static_cast<std::size_t>(c), {}});
    } else if (toks[0] == "property") {
      if (elements.empty()) fail("property before element");
      PlyProperty p;
      if (toks.size() == 5 && toks[1] == "list") {
        p.isList = true;
        if (!ply_type(toks[2], p.countType) || !ply_type(toks[3], p.type)) fail("bad list property type");
        p.name = toks[4];
      } else if (toks.size() == 3) {
        if (!ply_type(toks[1], p.type)) fail("bad property type");
        p.name = toks[2];
      } else {
        fail("bad property line");
      }
      elements.back().props.push_back(p);
    } else {
      fail("unknown header keyword: " + std::string(toks[0]));
    }
  }

  RawSurface raw;
  bool hasNormals = false;
  for (const auto& el : elements) {
    if (el.name != "vertex") continue;
    int nx = 0;
    for (const auto& p : el.props)
      if (p.name == "nx" || p.name == "ny" || p.name == "nz") ++nx;
    hasNormals = nx == 3;
  }

  std::vector<unsigned char> buf;
  for (const auto& el : elements) {
    const bool isVertex = el.name == "vertex";
    const bool isFace = el.name == "face";
    for (std::size_t r = 0; r < el.count; ++r) {
      Vec3 pos = Vec3::Zero(), nrm = Vec3::Zero();
      std::vector<VertexId> face;
      auto assign = [&](const PlyProperty& p, double v) {
        if (!isVertex) return;
        if (p.name == "x") pos.x() = v;
        else if (p.name == "y") pos.y() = v;
        else if (p.name == "z") pos.z() = v;
        else if (p.name == "nx") nrm.x() = v;
        else if (p.name == "ny") nrm.y() = v;
        else if (p.name == "nz") nrm.z() = v;
      };
      auto faceList = [&](const PlyProperty& p) {
        return isFace && (p.name == "vertex_indices" || p.name == "vertex_index");
      };
      if (!binary) {
        if (!next_line()) fail("unexpected end of data in element '" + el.name + "'");
        const auto toks = split_ws(line);
        std::size_t k = 0;
        for (const auto& p : el.props) {
          if (p.isList) {
            long cnt = 0;
            if (k >= toks.size() || !parse_long(toks[k++], cnt) || cnt < 0) fail("bad list count");
            for (long i = 0; i < cnt; ++i) {
              double v = 0;
              if (k >= toks.size() || !parse_double(toks[k++], v)) fail("bad list entry");
              if (faceList(p)) face.push_back(static_cast<VertexId>(v));
            }
          } else {
            double v = 0;
            if (k >= toks.size() || !parse_double(toks[k++], v)) fail("bad property value");
            assign(p, v);
          }
        }
      } else {
        for (const auto& p : el.props) {
          if (p.isList) {
            buf.resize(ply_size(p.countType));
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
              fail("truncated binary data");
            const auto cnt = static_cast<long>(ply_decode(p.countType, buf.data()));
            if (cnt < 0) fail("bad list count");
            buf.resize(ply_size(p.type) * static_cast<std::size_t>(cnt));
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
              fail("truncated binary data");
            if (faceList(p))
              for (long i = 0; i < cnt; ++i)
                face.push_back(static_cast<VertexId>(ply_decode(p.type, buf.data() + i * ply_size(p.type))));
          } else {
            buf.resize(ply_size(p.type));
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
              fail("truncated binary data");
            assign(p, ply_decode(p.type, buf.data()));
          }
        }
      }
      if (isVertex) {
        if (!pos.allFinite()) fail("non-finite vertex coordinate");
        raw.vertices.push_back(pos);
        if (hasNormals) raw.normals.push_back(nrm);
      } else if (isFace) {
        if (face.size() < 3) fail("face with fewer than 3 vertices");
        for (VertexId v : face)
          if (v < 0 || static_cast<std::size_t>(v) >= raw.vertices.size()) fail("face index out of range");
        raw.faces.push_back(std::move(face));
      }
    }
  }
  return raw;
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

SurfaceFormat parse_format(const std::string& name) {
  const auto n = lower(name);
  if (n == "obj") return SurfaceFormat::obj;
  if (n == "ply") return SurfaceFormat::ply;
  if (n == "xyz") return SurfaceFormat::xyz;
  throw Error("unknown surface format: " + name);
}

SurfaceFormat format_from_path(const fs::path& path) {
  auto ext = path.extension().string();
  if (!ext.empty() && ext.front() == '.') ext.erase(0, 1);
  return parse_format(ext);
}

RawSurface read_raw_surface(const fs::path& path, SurfaceFormat format) {
  if (!fs::exists(path)) throw FormatError(path.string(), 0, "file does not exist");
  switch (format) {
    case SurfaceFormat::obj: return read_obj(path);
    case SurfaceFormat::ply: return read_ply(path);
    case SurfaceFormat::xyz: return read_xyz(path);
  }
  throw Error("unreachable");
}

Surface load_surface(const fs::path& path, SurfaceFormat format, int knn) {
  RawSurface raw = read_raw_surface(path, format);
  if (raw.vertices.size() < 4)
    throw DegenerateInputError(path.string() + ": surface needs at least 4 vertices, got " +
                               std::to_string(raw.vertices.size()));
  if (!raw.faces.empty()) return Surface::from_mesh(std::move(raw.vertices), std::move(raw.faces), std::move(raw.normals));
  return Surface::from_point_cloud(std::move(raw.vertices), std::move(raw.normals), knn);
}

Surface load_surface(const fs::path& path, int knn) { return load_surface(path, format_from_path(path), knn); }

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

void write_obj(const fs::path& path, const std::vector<Vec3>& vertices,
               const std::vector<std::vector<VertexId>>& faces, const std::vector<Vec3>& normals) {
  auto out = open_out(path);
  out << "# isogrow\n";
  for (const auto& v : vertices)
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z()) << '\n';
  for (const auto& n : normals)
    out << "vn " << format_double(n.x()) << ' ' << format_double(n.y()) << ' ' << format_double(n.z()) << '\n';
  const bool withN = normals.size() == vertices.size() && !normals.empty();
  for (const auto& f : faces) {
    out << 'f';
    for (VertexId v : f) {
      out << ' ' << v + 1;
      if (withN) out << "//" << v + 1;
    }
    out << '\n';
  }
}

void write_xyz(const fs::path& path, const std::vector<Vec3>& vertices, const std::vector<Vec3>& normals) {
  auto out = open_out(path);
  const bool withN = normals.size() == vertices.size() && !normals.empty();
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto& v = vertices[i];
    out << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z());
    if (withN) out << ' ' << format_double(normals[i].x()) << ' ' << format_double(normals[i].y()) << ' '
                   << format_double(normals[i].z());
    out << '\n';
  }
}

void write_ply(const fs::path& path, const std::vector<Vec3>& vertices,
               const std::vector<std::vector<VertexId>>& faces, const std::vector<Vec3>& normals,
               const PlyExtras& extras, bool binary) {
  auto out = open_out(path, binary);
  const bool withN = normals.size() == vertices.size() && !normals.empty();
  const bool withC = extras.colors.size() == vertices.size() && !extras.colors.empty();
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (withN) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (withC) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  for (const auto& [name, vals] : extras.scalars) {
    if (vals.size() != vertices.size()) throw PreconditionError("PLY scalar '" + name + "' has wrong length");
    out << "property double " << name << "\n";
  }
  if (!faces.empty()) out << "element face " << faces.size() << "\nproperty list uchar int vertex_indices\n";
  out << "end_header\n";
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (binary) {
      for (int k = 0; k < 3; ++k) put(vertices[i][k]);
      if (withN)
        for (int k = 0; k < 3; ++k) put(normals[i][k]);
      if (withC)
        for (int k = 0; k < 3; ++k) put(extras.colors[i][k]);
      for (const auto& [name, vals] : extras.scalars) put(vals[i]);
    } else {
      out << format_double(vertices[i].x()) << ' ' << format_double(vertices[i].y()) << ' '
          << format_double(vertices[i].z());
      if (withN)
        out << ' ' << format_double(normals[i].x()) << ' ' << format_double(normals[i].y()) << ' '
            << format_double(normals[i].z());
      if (withC)
        out << ' ' << int(extras.colors[i][0]) << ' ' << int(extras.colors[i][1]) << ' ' << int(extras.colors[i][2]);
      for (const auto& [name, vals] : extras.scalars) out << ' ' << format_double(vals[i]);
      out << '\n';
    }
  }
  for (const auto& f : faces) {
    if (f.size() > 255) throw PreconditionError("face too large for PLY uchar count");
    if (binary) {
      put(static_cast<std::uint8_t>(f.size()));
      for (VertexId v : f) put(static_cast<std::int32_t>(v));
    } else {
      out << f.size();
      for (VertexId v : f) out << ' ' << v;
      out << '\n';
    }
  }
}

}  // namespace isogrow
