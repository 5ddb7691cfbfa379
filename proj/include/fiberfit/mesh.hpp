#pragma once

#include <Eigen/Dense>
#include <array>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fiberfit/util.hpp"

namespace fiberfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Triangle surface mesh with precomputed connectivity.
//
// Invariants enforced at construction:
//   * every triangle index is a valid vertex id and the three ids differ,
//   * every triangle has strictly positive area,
//   * each edge borders at most two triangles (manifold),
//   * interior edges appear once in each direction (consistent orientation).

class TriMesh {
 public:
  struct Edge {
    int v0 = -1, v1 = -1;    // v0 < v1
    int t0 = -1, t1 = -1;    // incident triangles; t1 == -1 on the boundary
  };

  TriMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    build();
  }

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int triangle_count() const { return static_cast<int>(triangles_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }

  const Vec3& vertex(int v) const { return vertices_[v]; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }

  double area(int t) const { return areas_[t]; }
  double total_area() const { return total_area_; }
  const Vec3& normal(int t) const { return normals_[t]; }

  // Area-weighted unit vertex normal.
  const Vec3& vertex_normal(int v) const { return vertex_normals_[v]; }
  // One third of the total area of incident triangles.
  double lumped_area(int v) const { return lumped_areas_[v]; }
  bool is_boundary_vertex(int v) const { return boundary_vertex_[v] != 0; }

  const std::vector<int>& triangles_of(int v) const { return vertex_tris_[v]; }
  const std::vector<int>& neighbors_of(int v) const { return vertex_nbrs_[v]; }

  double mean_edge_length() const { return mean_edge_length_; }

  void bounding_box(Vec3& lo, Vec3& hi) const {
    lo = bbox_lo_;
    hi = bbox_hi_;
  }

  // Re-checks every construction invariant; throws std::logic_error on the
  // first violation. Cheap enough to run inside tests on every fixture.
  void validate() const {
    const int nv = vertex_count();
    for (int t = 0; t < triangle_count(); ++t) {
      const auto& tri = triangles_[t];
      for (int k = 0; k < 3; ++k) {
        if (tri[k] < 0 || tri[k] >= nv)
          throw std::logic_error("mesh: triangle " + std::to_string(t) +
                                 " references vertex " + std::to_string(tri[k]));
      }
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        throw std::logic_error("mesh: triangle " + std::to_string(t) +
                               " repeats a vertex");
      if (!(areas_[t] > 0.0))
        throw std::logic_error("mesh: triangle " + std::to_string(t) +
                               " has non-positive area");
    }
    // Interior edges must be wound once in each direction.
    std::map<std::pair<int, int>, int> directed;
    for (const auto& tri : triangles_) {
      for (int k = 0; k < 3; ++k) {
        const auto key = std::make_pair(tri[k], tri[(k + 1) % 3]);
        if (++directed[key] > 1)
          throw std::logic_error("mesh: duplicated directed edge " +
                                 std::to_string(key.first) + "->" +
                                 std::to_string(key.second));
      }
    }
  }

 private:
  void build() {
    const int nv = vertex_count();
    const int nt = triangle_count();
    areas_.resize(nt);
    normals_.resize(nt);
    vertex_tris_.assign(nv, {});
    vertex_nbrs_.assign(nv, {});
    vertex_normals_.assign(nv, Vec3::Zero());
    lumped_areas_.assign(nv, 0.0);
    boundary_vertex_.assign(nv, 0);
    total_area_ = 0.0;

    for (int t = 0; t < nt; ++t) {
      const auto& tri = triangles_[t];
      for (int k = 0; k < 3; ++k) {
        if (tri[k] < 0 || tri[k] >= nv)
          throw std::invalid_argument("mesh: triangle " + std::to_string(t) +
                                      " references missing vertex " +
                                      std::to_string(tri[k]));
      }
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        throw std::invalid_argument("mesh: triangle " + std::to_string(t) +
                                    " repeats a vertex");
      const Vec3 e01 = vertices_[tri[1]] - vertices_[tri[0]];
      const Vec3 e02 = vertices_[tri[2]] - vertices_[tri[0]];
      const Vec3 cross = e01.cross(e02);
      const double doubled = cross.norm();
      const double longest = std::max({e01.norm(), e02.norm(),
                                       (vertices_[tri[2]] - vertices_[tri[1]]).norm()});
      if (!(doubled > 2e-12 * longest * longest))
        throw std::invalid_argument("mesh: triangle " + std::to_string(t) +
                                    " is degenerate (zero area)");
      areas_[t] = 0.5 * doubled;
      normals_[t] = cross / doubled;
      total_area_ += areas_[t];
      for (int k = 0; k < 3; ++k) {
        vertex_tris_[tri[k]].push_back(t);
        vertex_normals_[tri[k]] += areas_[t] * normals_[t];
        lumped_areas_[tri[k]] += areas_[t] / 3.0;
      }
    }

    // Edge table; rejects non-manifold and inconsistently wound input.
    std::map<std::pair<int, int>, int> edge_index;
    std::map<std::pair<int, int>, int> directed_count;
    for (int t = 0; t < nt; ++t) {
      const auto& tri = triangles_[t];
      for (int k = 0; k < 3; ++k) {
        const int a = tri[k], b = tri[(k + 1) % 3];
        if (++directed_count[{a, b}] > 1)
          throw std::invalid_argument(
              "mesh: edge " + std::to_string(a) + "->" + std::to_string(b) +
              " is wound twice in the same direction (inconsistent orientation)");
        const auto key = std::minmax(a, b);
        auto it = edge_index.find(key);
        if (it == edge_index.end()) {
          edge_index.emplace(key, static_cast<int>(edges_.size()));
          edges_.push_back({key.first, key.second, t, -1});
        } else {
          Edge& e = edges_[it->second];
          if (e.t1 != -1)
            throw std::invalid_argument("mesh: edge " + std::to_string(key.first) +
                                        "-" + std::to_string(key.second) +
                                        " borders more than two triangles");
          e.t1 = t;
        }
      }
    }

    double edge_sum = 0.0;
    for (const Edge& e : edges_) {
      edge_sum += (vertices_[e.v1] - vertices_[e.v0]).norm();
      vertex_nbrs_[e.v0].push_back(e.v1);
      vertex_nbrs_[e.v1].push_back(e.v0);
      if (e.t1 == -1) {
        boundary_vertex_[e.v0] = 1;
        boundary_vertex_[e.v1] = 1;
      }
    }
    mean_edge_length_ = edges_.empty() ? 0.0 : edge_sum / edges_.size();
    for (auto& nbrs : vertex_nbrs_) std::sort(nbrs.begin(), nbrs.end());

    bbox_lo_ = Vec3::Constant(std::numeric_limits<double>::infinity());
    bbox_hi_ = -bbox_lo_;
    for (const Vec3& p : vertices_) {
      bbox_lo_ = bbox_lo_.cwiseMin(p);
      bbox_hi_ = bbox_hi_.cwiseMax(p);
    }
    for (int v = 0; v < nv; ++v) {
      const double n = vertex_normals_[v].norm();
      if (n > 0.0) vertex_normals_[v] /= n;
    }
  }

  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Edge> edges_;
  std::vector<double> areas_;
  std::vector<Vec3> normals_;
  std::vector<Vec3> vertex_normals_;
  std::vector<double> lumped_areas_;
  std::vector<char> boundary_vertex_;
  std::vector<std::vector<int>> vertex_tris_;
  std::vector<std::vector<int>> vertex_nbrs_;
  double total_area_ = 0.0;
  double mean_edge_length_ = 0.0;
  Vec3 bbox_lo_, bbox_hi_;
};

// ---------------------------------------------------------------------------
// A point attached to a mesh triangle via barycentric coordinates.

struct PointSample {
  int triangle = -1;
  Vec3 bary = Vec3::Zero();  // nonnegative, sums to 1
  Vec3 position = Vec3::Zero();

  static PointSample at(const TriMesh& mesh, int t, const Vec3& bary) {
    const auto& tri = mesh.triangle(t);
    PointSample s;
    s.triangle = t;
    s.bary = bary;
    s.position = bary[0] * mesh.vertex(tri[0]) + bary[1] * mesh.vertex(tri[1]) +
                 bary[2] * mesh.vertex(tri[2]);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Unit-square grid mesh on [-1,1]^2 (z = 0): n x n vertices, cells split along
// the lower-left -> upper-right diagonal, triangles wound counterclockwise
// when viewed from +z.

inline TriMesh build_unit_grid_mesh(int n) {
  if (n < 2) throw std::invalid_argument("build_unit_grid_mesh: need n >= 2");
  std::vector<Vec3> verts;
  verts.reserve(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = -1.0 + 2.0 * i / (n - 1);
      const double y = -1.0 + 2.0 * j / (n - 1);
      verts.emplace_back(x, y, 0.0);
    }
  }
  auto id = [n](int i, int j) { return j * n + i; };
  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * static_cast<std::size_t>(n - 1) * (n - 1));
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const int ll = id(i, j), lr = id(i + 1, j);
      const int ul = id(i, j + 1), ur = id(i + 1, j + 1);
      tris.push_back({ll, lr, ur});
      tris.push_back({ll, ur, ul});
    }
  }
  return TriMesh(std::move(verts), std::move(tris));
}

// ---------------------------------------------------------------------------
// Exact closest point on a triangle (Ericson's region classification).

inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                      const Vec3& c, Vec3& bary) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    bary = {1.0, 0.0, 0.0};
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    bary = {0.0, 1.0, 0.0};
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    bary = {1.0 - v, v, 0.0};
    return a + v * ab;
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    bary = {0.0, 0.0, 1.0};
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    bary = {1.0 - w, 0.0, w};
    return a + w * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    bary = {0.0, 1.0 - w, w};
    return b + w * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  bary = {1.0 - v - w, v, w};
  return a + ab * v + ac * w;
}

struct ProjectedPoint {
  PointSample sample;
  double distance = 0.0;
};

// Closest-point projection of arbitrary points onto the surface.
inline std::vector<ProjectedPoint> project_points(const TriMesh& mesh,
                                                  const std::vector<Vec3>& points) {
  std::vector<ProjectedPoint> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    ProjectedPoint best;
    best.distance = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangle(t);
      Vec3 bary;
      const Vec3 q = closest_point_on_triangle(p, mesh.vertex(tri[0]),
                                               mesh.vertex(tri[1]),
                                               mesh.vertex(tri[2]), bary);
      const double d = (q - p).norm();
      if (d < best.distance) {
        best.distance = d;
        best.sample.triangle = t;
        best.sample.bary = bary;
        best.sample.position = q;
      }
    }
    out.push_back(best);
  }
  return out;
}

inline int nearest_vertex(const TriMesh& mesh, const Vec3& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double d = (mesh.vertex(v) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

// Interpolates per-vertex scalars at a surface point.
inline double interpolate_vertex_values(const TriMesh& mesh,
                                        const std::vector<double>& values,
                                        const PointSample& s) {
  const auto& tri = mesh.triangle(s.triangle);
  return s.bary[0] * values[tri[0]] + s.bary[1] * values[tri[1]] +
         s.bary[2] * values[tri[2]];
}

}  // namespace fiberfit
