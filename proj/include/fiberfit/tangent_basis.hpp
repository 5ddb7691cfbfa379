#pragma once

#include <Eigen/Sparse>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <unordered_map>

#include "fiberfit/mesh.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Orthonormal tangent frame (v1, v2, n) at every vertex. v1 anchors the fiber
// angle parameterization, so downstream fits are only meaningful if the frame
// varies smoothly across the surface.

struct TangentBasis {
  std::vector<Vec3> v1, v2, n;

  void validate() const {
    for (std::size_t i = 0; i < v1.size(); ++i) {
      const double unit = std::max({std::abs(v1[i].norm() - 1.0),
                                    std::abs(v2[i].norm() - 1.0),
                                    std::abs(n[i].norm() - 1.0)});
      const double ortho = std::max({std::abs(v1[i].dot(v2[i])),
                                     std::abs(v1[i].dot(n[i])),
                                     std::abs(v2[i].dot(n[i]))});
      if (unit > 1e-9 || ortho > 1e-9)
        throw std::logic_error("tangent basis: frame at vertex " +
                               std::to_string(i) + " is not orthonormal");
    }
  }
};

// Global (e_x, e_y, e_z) frame for meshes lying in a z = const plane.
inline TangentBasis trivial_planar_basis(const TriMesh& mesh) {
  Vec3 lo, hi;
  mesh.bounding_box(lo, hi);
  const double scale = (hi - lo).norm();
  if (hi.z() - lo.z() > 1e-9 * (1.0 + scale))
    throw std::invalid_argument("trivial_planar_basis: mesh is not planar");
  TangentBasis basis;
  basis.v1.assign(mesh.vertex_count(), Vec3::UnitX());
  basis.v2.assign(mesh.vertex_count(), Vec3::UnitY());
  basis.n.assign(mesh.vertex_count(), Vec3::UnitZ());
  return basis;
}

namespace detail {

// Intrinsic polar layout of the edges around one vertex: every incident edge
// gets an angle, with corner angles rescaled so interior vertices close up to
// exactly 2*pi. Boundary vertices keep their raw angle sum, which leaves
// transport across a flat sheet undistorted all the way to the rim.
struct VertexFan {
  std::unordered_map<int, double> angle_of;  // neighbor vertex -> angle
  int first_neighbor = -1;
  double scale = 1.0;
};

inline double corner_angle(const Vec3& apex, const Vec3& p, const Vec3& q) {
  const Vec3 u = p - apex, v = q - apex;
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

inline std::vector<VertexFan> build_vertex_fans(const TriMesh& mesh) {
  const int nv = mesh.vertex_count();
  std::vector<VertexFan> fans(nv);
  for (int v = 0; v < nv; ++v) {
    // Wedge successor map: triangle (v, a, b) turns a into b around v.
    std::unordered_map<int, std::pair<int, double>> wedge;
    std::unordered_map<int, int> indegree;
    for (const int t : mesh.triangles_of(v)) {
      const auto& tri = mesh.triangle(t);
      const int k = tri[0] == v ? 0 : (tri[1] == v ? 1 : 2);
      const int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
      wedge[a] = {b, corner_angle(mesh.vertex(v), mesh.vertex(a), mesh.vertex(b))};
      ++indegree[b];
    }
    if (wedge.empty())
      throw std::invalid_argument("tangent basis: isolated vertex " +
                                  std::to_string(v));
    int start = -1;
    if (mesh.is_boundary_vertex(v)) {
      for (const auto& [a, succ] : wedge)
        if (indegree.find(a) == indegree.end()) start = a;
      if (start == -1)
        throw std::invalid_argument("tangent basis: non-manifold fan at vertex " +
                                    std::to_string(v));
    } else {
      start = mesh.neighbors_of(v).front();
    }
    VertexFan& fan = fans[v];
    fan.first_neighbor = start;
    double theta = 0.0;
    int cur = start;
    std::size_t steps = 0;
    fan.angle_of[cur] = 0.0;
    while (true) {
      const auto it = wedge.find(cur);
      if (it == wedge.end()) break;  // boundary chain ends
      theta += it->second.second;
      cur = it->second.first;
      if (cur == start) break;  // interior cycle closed
      if (++steps > wedge.size())
        throw std::invalid_argument("tangent basis: non-manifold fan at vertex " +
                                    std::to_string(v));
      fan.angle_of[cur] = theta;
    }
    const double total = theta;
    if (fan.angle_of.size() != mesh.neighbors_of(v).size())
      throw std::invalid_argument("tangent basis: non-manifold fan at vertex " +
                                  std::to_string(v));
    if (!mesh.is_boundary_vertex(v)) {
      fan.scale = 2.0 * std::numbers::pi / total;
      for (auto& [nbr, ang] : fan.angle_of) ang *= fan.scale;
    }
  }
  return fans;
}

// World-space frame aligned with the fan's zero-angle edge.
inline void vertex_frame(const TriMesh& mesh, const VertexFan& fan, int v, Vec3& x,
                         Vec3& y) {
  const Vec3& n = mesh.vertex_normal(v);
  const Vec3 e = mesh.vertex(fan.first_neighbor) - mesh.vertex(v);
  x = e - e.dot(n) * n;
  const double len = x.norm();
  if (!(len > 1e-12 * e.norm()))
    throw std::runtime_error("tangent basis: degenerate frame at vertex " +
                             std::to_string(v));
  x /= len;
  y = n.cross(x);
}

inline int components(const TriMesh& mesh) {
  std::vector<int> parent(mesh.vertex_count());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& e : mesh.edges()) parent[find(e.v0)] = find(e.v1);
  int count = 0;
  for (std::size_t i = 0; i < parent.size(); ++i)
    if (find(static_cast<int>(i)) == static_cast<int>(i)) ++count;
  return count;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tangent frames by short-time vector heat diffusion: a single seed vector is
// parallel-transported to the whole surface through the connection Laplacian,
//   (M + t L_con) X = X0,
// with two scalar solves renormalizing the magnitude. The three systems are
// Hermitian positive definite and solved by sparse Cholesky factorization;
// an iterative solver's residual floor would wipe out the exponentially small
// far-field transport on elongated meshes. Diffusion time defaults to the
// squared mean edge length.

inline TangentBasis vector_heat_basis(const TriMesh& mesh, int source_vertex,
                                      const Vec3& source_vector, double t = -1.0) {
  using Complex = std::complex<double>;
  const int nv = mesh.vertex_count();
  if (source_vertex < 0 || source_vertex >= nv)
    throw std::invalid_argument("vector_heat_basis: source vertex out of range");
  if (detail::components(mesh) != 1)
    throw std::invalid_argument("vector_heat_basis: mesh is not connected");
  if (t <= 0.0) t = mesh.mean_edge_length() * mesh.mean_edge_length();

  const auto fans = detail::build_vertex_fans(mesh);
  std::vector<Vec3> frame_x(nv), frame_y(nv);
  for (int v = 0; v < nv; ++v)
    detail::vertex_frame(mesh, fans[v], v, frame_x[v], frame_y[v]);

  // Cotangent edge weights. Negative weights (obtuse triangles) are kept
  // as-is; the shifted systems below remain positive definite for small t.
  std::unordered_map<std::int64_t, int> edge_id;
  edge_id.reserve(mesh.edge_count());
  const auto edge_key = [nv](int a, int b) {
    return static_cast<std::int64_t>(std::min(a, b)) * nv + std::max(a, b);
  };
  for (int e = 0; e < mesh.edge_count(); ++e)
    edge_id[edge_key(mesh.edges()[e].v0, mesh.edges()[e].v1)] = e;
  std::vector<double> cotan(mesh.edge_count(), 0.0);
  for (int t_id = 0; t_id < mesh.triangle_count(); ++t_id) {
    const auto& tri = mesh.triangle(t_id);
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3], c = tri[(k + 2) % 3];
      const Vec3 u = mesh.vertex(b) - mesh.vertex(a);
      const Vec3 w = mesh.vertex(c) - mesh.vertex(a);
      cotan[edge_id.at(edge_key(b, c))] += 0.5 * u.dot(w) / u.cross(w).norm();
    }
  }

  // Assemble complex (connection) and real (scalar) operators A = M + t L.
  std::vector<Eigen::Triplet<Complex>> trip_c;
  std::vector<Eigen::Triplet<double>> trip_r;
  std::vector<double> diag(nv, 0.0);
  for (int e = 0; e < mesh.edge_count(); ++e) {
    const auto& edge = mesh.edges()[e];
    const int i = edge.v0, j = edge.v1;
    const double w = cotan[e];
    const double phi_ij = fans[i].angle_of.at(j);
    const double phi_ji = fans[j].angle_of.at(i);
    const Complex rot_ij =
        std::polar(1.0, phi_ji + std::numbers::pi - phi_ij);  // frame i -> j
    trip_c.emplace_back(i, j, -t * w * std::conj(rot_ij));
    trip_c.emplace_back(j, i, -t * w * rot_ij);
    trip_r.emplace_back(i, j, -t * w);
    trip_r.emplace_back(j, i, -t * w);
    diag[i] += w;
    diag[j] += w;
  }
  for (int v = 0; v < nv; ++v) {
    const double m = mesh.lumped_area(v);
    trip_c.emplace_back(v, v, Complex(m + t * diag[v], 0.0));
    trip_r.emplace_back(v, v, m + t * diag[v]);
  }
  Eigen::SparseMatrix<Complex> a_con(nv, nv);
  Eigen::SparseMatrix<double> a_sca(nv, nv);
  a_con.setFromTriplets(trip_c.begin(), trip_c.end());
  a_sca.setFromTriplets(trip_r.begin(), trip_r.end());

  // Seed: tangential part of the requested vector, encoded in the source frame.
  const Vec3& n_src = mesh.vertex_normal(source_vertex);
  const Vec3 tang = source_vector - source_vector.dot(n_src) * n_src;
  if (!(tang.norm() > 1e-12 * (1.0 + source_vector.norm())))
    throw std::invalid_argument(
        "vector_heat_basis: source vector has no tangential part");
  const Complex z0(tang.dot(frame_x[source_vertex]),
                   tang.dot(frame_y[source_vertex]));

  Eigen::VectorXcd rhs_vec = Eigen::VectorXcd::Zero(nv);
  rhs_vec[source_vertex] = z0;
  Eigen::VectorXd rhs_mag = Eigen::VectorXd::Zero(nv);
  rhs_mag[source_vertex] = std::abs(z0);
  Eigen::VectorXd rhs_ind = Eigen::VectorXd::Zero(nv);
  rhs_ind[source_vertex] = 1.0;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Complex>> chol_c(a_con);
  if (chol_c.info() != Eigen::Success)
    throw std::runtime_error("vector_heat_basis: connection solve failed");
  const Eigen::VectorXcd y = chol_c.solve(rhs_vec);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol_r(a_sca);
  if (chol_r.info() != Eigen::Success)
    throw std::runtime_error("vector_heat_basis: scalar solve failed");
  const Eigen::VectorXd mag = chol_r.solve(rhs_mag);
  const Eigen::VectorXd ind = chol_r.solve(rhs_ind);

  TangentBasis basis;
  basis.v1.resize(nv);
  basis.v2.resize(nv);
  basis.n.resize(nv);
  for (int v = 0; v < nv; ++v) {
    Complex z = y[v];
    if (!(std::abs(z) > 0.0))
      throw std::runtime_error("vector_heat_basis: transport vanished at vertex " +
                               std::to_string(v));
    // Renormalized magnitude (kept for fidelity; the frame only needs the
    // direction, which the final normalization pins to unit length).
    const double m = std::abs(ind[v]) > 1e-300 ? mag[v] / ind[v] : 1.0;
    z *= m / std::abs(z);
    Vec3 dir = z.real() * frame_x[v] + z.imag() * frame_y[v];
    dir.normalize();
    basis.n[v] = mesh.vertex_normal(v);
    basis.v1[v] = dir;
    basis.v2[v] = basis.n[v].cross(dir);
  }
  return basis;
}

// Deterministic defaults for the transport seed: the vertex carrying the most
// lumped area (ties within rounding go to the lowest index), pointing along
// its first incident edge.
inline int default_transport_source(const TriMesh& mesh) {
  int best = 0;
  for (int v = 1; v < mesh.vertex_count(); ++v)
    if (mesh.lumped_area(v) > mesh.lumped_area(best) * (1.0 + 1e-12)) best = v;
  return best;
}

inline Vec3 default_transport_direction(const TriMesh& mesh, int v) {
  const Vec3& n = mesh.vertex_normal(v);
  const Vec3 e = mesh.vertex(mesh.neighbors_of(v).front()) - mesh.vertex(v);
  return (e - e.dot(n) * n).normalized();
}

// Frame at an interior surface point: barycentric blend of the vertex frames,
// re-orthogonalized against the triangle normal.
inline void interpolate_basis(const TriMesh& mesh, const TangentBasis& basis,
                              const PointSample& s, Vec3& v1, Vec3& v2, Vec3& n) {
  const auto& tri = mesh.triangle(s.triangle);
  n = mesh.normal(s.triangle);
  Vec3 blend = s.bary[0] * basis.v1[tri[0]] + s.bary[1] * basis.v1[tri[1]] +
               s.bary[2] * basis.v1[tri[2]];
  blend -= blend.dot(n) * n;
  if (blend.norm() < 1e-12) {
    // Blend cancelled out; fall back to an arbitrary in-plane direction.
    blend = (mesh.vertex(tri[1]) - mesh.vertex(tri[0]));
    blend -= blend.dot(n) * n;
  }
  v1 = blend.normalized();
  v2 = n.cross(v1);
}

}  // namespace fiberfit
