#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fiberfit/mesh.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Wavefront OBJ (triangles; larger faces are fan-triangulated).

inline TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw IoError(path + ":" + std::to_string(lineno) + ": malformed vertex");
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> ids;
      std::string field;
      while (ls >> field) {
        const int raw = std::stoi(field.substr(0, field.find('/')));
        const int idx = raw > 0 ? raw - 1 : static_cast<int>(verts.size()) + raw;
        if (idx < 0 || idx >= static_cast<int>(verts.size()))
          throw IoError(path + ":" + std::to_string(lineno) +
                        ": face references missing vertex " + field);
        ids.push_back(idx);
      }
      if (ids.size() < 3)
        throw IoError(path + ":" + std::to_string(lineno) + ": face with < 3 vertices");
      for (std::size_t k = 1; k + 1 < ids.size(); ++k)
        tris.push_back({ids[0], ids[k], ids[k + 1]});
    }
    // Normals, texture coordinates and grouping tags are ignored.
  }
  if (verts.empty() || tris.empty())
    throw IoError(path + ": no triangle geometry found");
  try {
    return TriMesh(std::move(verts), std::move(tris));
  } catch (const std::invalid_argument& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline void save_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3& p = mesh.vertex(v);
    out << "v " << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' '
        << fmt_double(p.z()) << '\n';
  }
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    out << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Legacy ASCII VTK POLYDATA with optional per-vertex attributes. This is the
// interchange format for dense activation maps and fitted fields; writing is
// deterministic so that write -> read -> write is byte-identical.

struct VtkPolyData {
  std::vector<Vec3> points;
  std::vector<std::array<int, 3>> polygons;
  std::map<std::string, std::vector<double>> point_scalars;
  std::map<std::string, std::vector<Vec3>> point_vectors;

  TriMesh to_mesh() const { return TriMesh(points, polygons); }
};

inline VtkPolyData load_vtk(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  auto need = [&](const std::string& what) -> std::string {
    std::string tok;
    if (!(in >> tok)) throw IoError(path + ": truncated file, expected " + what);
    return tok;
  };
  // Header: "# vtk DataFile Version x.x" line, title line, ASCII, DATASET.
  std::string line;
  if (!std::getline(in, line) || line.rfind("# vtk DataFile", 0) != 0)
    throw IoError(path + ": not a legacy VTK file");
  std::getline(in, line);  // title, ignored
  if (need("ASCII") != "ASCII") throw IoError(path + ": only ASCII VTK supported");
  if (need("DATASET") != "DATASET" || need("POLYDATA") != "POLYDATA")
    throw IoError(path + ": expected DATASET POLYDATA");

  VtkPolyData data;
  std::string tok;
  while (in >> tok) {
    if (tok == "POINTS") {
      const int n = std::stoi(need("point count"));
      need("point type");
      data.points.resize(n);
      for (int i = 0; i < n; ++i)
        if (!(in >> data.points[i].x() >> data.points[i].y() >> data.points[i].z()))
          throw IoError(path + ": truncated POINTS block");
    } else if (tok == "POLYGONS") {
      const int n = std::stoi(need("polygon count"));
      need("polygon list size");
      data.polygons.reserve(n);
      for (int i = 0; i < n; ++i) {
        int arity;
        if (!(in >> arity)) throw IoError(path + ": truncated POLYGONS block");
        if (arity != 3)
          throw IoError(path + ": polygon " + std::to_string(i) +
                        " is not a triangle");
        std::array<int, 3> tri;
        if (!(in >> tri[0] >> tri[1] >> tri[2]))
          throw IoError(path + ": truncated POLYGONS block");
        data.polygons.push_back(tri);
      }
    } else if (tok == "POINT_DATA") {
      const int n = std::stoi(need("point data count"));
      if (n != static_cast<int>(data.points.size()))
        throw IoError(path + ": POINT_DATA size mismatch");
    } else if (tok == "SCALARS") {
      const std::string name = need("scalar name");
      need("scalar type");
      // Optional component count, then mandatory LOOKUP_TABLE line.
      std::string next = need("LOOKUP_TABLE");
      if (next != "LOOKUP_TABLE") next = need("LOOKUP_TABLE");
      need("lookup table name");
      auto& values = data.point_scalars[name];
      values.resize(data.points.size());
      for (double& v : values)
        if (!(in >> v)) throw IoError(path + ": truncated SCALARS " + name);
    } else if (tok == "VECTORS") {
      const std::string name = need("vector name");
      need("vector type");
      auto& values = data.point_vectors[name];
      values.resize(data.points.size());
      for (Vec3& v : values)
        if (!(in >> v.x() >> v.y() >> v.z()))
          throw IoError(path + ": truncated VECTORS " + name);
    } else {
      throw IoError(path + ": unsupported VTK section '" + tok + "'");
    }
  }
  if (data.points.empty() || data.polygons.empty())
    throw IoError(path + ": no POLYDATA geometry found");
  return data;
}

inline void save_vtk(const std::string& path, const VtkPolyData& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "# vtk DataFile Version 3.0\n";
  out << "fiberfit surface\n";
  out << "ASCII\n";
  out << "DATASET POLYDATA\n";
  out << "POINTS " << data.points.size() << " double\n";
  for (const Vec3& p : data.points)
    out << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' '
        << fmt_double(p.z()) << '\n';
  out << "POLYGONS " << data.polygons.size() << ' ' << 4 * data.polygons.size()
      << '\n';
  for (const auto& tri : data.polygons)
    out << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
  if (!data.point_scalars.empty() || !data.point_vectors.empty()) {
    out << "POINT_DATA " << data.points.size() << '\n';
    for (const auto& [name, values] : data.point_scalars) {
      if (values.size() != data.points.size())
        throw IoError("scalar field '" + name + "' size mismatch");
      out << "SCALARS " << name << " double 1\n";
      out << "LOOKUP_TABLE default\n";
      for (double v : values) out << fmt_double(v) << '\n';
    }
    for (const auto& [name, values] : data.point_vectors) {
      if (values.size() != data.points.size())
        throw IoError("vector field '" + name + "' size mismatch");
      out << "VECTORS " << name << " double\n";
      for (const Vec3& v : values)
        out << fmt_double(v.x()) << ' ' << fmt_double(v.y()) << ' '
            << fmt_double(v.z()) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void save_vtk(const std::string& path, const TriMesh& mesh) {
  VtkPolyData data;
  data.points = mesh.vertices();
  data.polygons = mesh.triangles();
  save_vtk(path, data);
}

// ---------------------------------------------------------------------------
// Extension dispatch used by every CLI entry point.

inline TriMesh load_mesh(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".obj")
    return load_obj(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".vtk") {
    try {
      return load_vtk(path).to_mesh();
    } catch (const std::invalid_argument& e) {
      throw IoError(path + ": " + e.what());
    }
  }
  throw IoError(path + ": unsupported mesh format (expected .obj or .vtk)");
}

inline void save_mesh(const std::string& path, const TriMesh& mesh) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".obj")
    return save_obj(path, mesh);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".vtk")
    return save_vtk(path, mesh);
  throw IoError(path + ": unsupported mesh format (expected .obj or .vtk)");
}

// ---------------------------------------------------------------------------
// Sparse activation samples: one row per measurement.

struct SampleRow {
  int map_id = 0;
  Vec3 position = Vec3::Zero();
  double time_ms = 0.0;
};

inline void save_samples_csv(const std::string& path,
                             const std::vector<SampleRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "map_id,x,y,z,time_ms\n";
  for (const SampleRow& r : rows)
    out << r.map_id << ',' << fmt_double(r.position.x()) << ','
        << fmt_double(r.position.y()) << ',' << fmt_double(r.position.z()) << ','
        << fmt_double(r.time_ms) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<SampleRow> load_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "map_id,x,y,z,time_ms")
    throw IoError(path + ": expected header 'map_id,x,y,z,time_ms'");
  std::vector<SampleRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 5)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 5 columns");
    SampleRow r;
    try {
      r.map_id = std::stoi(fields[0]);
      r.position = {std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3])};
      r.time_ms = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace fiberfit
