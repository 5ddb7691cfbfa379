#pragma once

#include <cmath>
#include <limits>

#include "fiberfit/conductivity.hpp"
#include "fiberfit/mesh.hpp"
#include "fiberfit/tangent_basis.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Per-vertex conductivity tensors (world coordinates, tangential).

struct ConductivityTensorField {
  std::vector<Mat3> vertex_tensors;

  static ConductivityTensorField isotropic(const TriMesh& mesh, double speed) {
    if (!(speed > 0.0))
      throw std::invalid_argument("tensor field: speed must be positive");
    ConductivityTensorField f;
    f.vertex_tensors.assign(mesh.vertex_count(), speed * speed * Mat3::Identity());
    return f;
  }

  static ConductivityTensorField constant(const TriMesh& mesh, const Mat3& d) {
    ConductivityTensorField f;
    f.vertex_tensors.assign(mesh.vertex_count(), d);
    return f;
  }

  static ConductivityTensorField from_fiber_params(
      const TriMesh& mesh, const TangentBasis& basis,
      const std::vector<FiberParams>& params) {
    if (static_cast<int>(params.size()) != mesh.vertex_count())
      throw std::invalid_argument("tensor field: one FiberParams per vertex required");
    ConductivityTensorField f;
    f.vertex_tensors.reserve(params.size());
    for (int v = 0; v < mesh.vertex_count(); ++v)
      f.vertex_tensors.push_back(assemble_tensor(params[v], basis.v1[v], basis.v2[v]));
    return f;
  }

  // Vertex-averaged tensor restricted to the triangle plane, expressed in the
  // orthonormal frame returned by triangle_frame().
  Eigen::Matrix2d triangle_tensor(const TriMesh& mesh, int t) const {
    const auto& tri = mesh.triangle(t);
    const Mat3 avg = (vertex_tensors[tri[0]] + vertex_tensors[tri[1]] +
                      vertex_tensors[tri[2]]) /
                     3.0;
    const Eigen::Matrix<double, 3, 2> b = triangle_frame(mesh, t);
    return b.transpose() * avg * b;
  }

  static Eigen::Matrix<double, 3, 2> triangle_frame(const TriMesh& mesh, int t) {
    const auto& tri = mesh.triangle(t);
    const Vec3 t1 = (mesh.vertex(tri[1]) - mesh.vertex(tri[0])).normalized();
    const Vec3 t2 = mesh.normal(t).cross(t1);
    Eigen::Matrix<double, 3, 2> b;
    b.col(0) = t1;
    b.col(1) = t2;
    return b;
  }

  void validate(const TriMesh& mesh) const {
    if (static_cast<int>(vertex_tensors.size()) != mesh.vertex_count())
      throw std::logic_error("tensor field: size mismatch with mesh");
    for (std::size_t v = 0; v < vertex_tensors.size(); ++v) {
      const Mat3& d = vertex_tensors[v];
      if ((d - d.transpose()).norm() > 1e-12 * (1.0 + d.norm()))
        throw std::logic_error("tensor field: asymmetric tensor at vertex " +
                               std::to_string(v));
    }
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const Eigen::Matrix2d dp = triangle_tensor(mesh, t);
      const double det = dp.determinant();
      const double tr = dp.trace();
      if (tr < -1e-12 || det < -1e-12 * (1.0 + tr * tr))
        throw std::logic_error("tensor field: indefinite projection on triangle " +
                               std::to_string(t));
    }
  }
};

// ---------------------------------------------------------------------------
// Activation map produced by the forward solver.

struct SourcePoint {
  int vertex = -1;
  double time = 0.0;
};

struct ActivationMap {
  std::vector<double> times;  // per vertex; +inf where never reached
  std::vector<SourcePoint> sources;
};

namespace detail {

// Geometry of one triangle in its own 2-D frame plus the Riemannian metric
// M = D_plane^{-1} used by the local solver.
struct FimTriangle {
  Eigen::Vector2d p[3];
  Vec3 world[3];
  Eigen::Matrix2d metric;
};

inline double metric_dot(const Eigen::Matrix2d& m, const Eigen::Vector2d& u,
                         const Eigen::Vector2d& v) {
  return u.dot(m * v);
}

// Tangential pseudo-inverse: inverts the in-plane eigenvalues and ignores the
// (near-)null normal direction.
inline Mat3 tangential_pseudo_inverse(const Mat3& d) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(d);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  Mat3 pinv = Mat3::Zero();
  for (int k = 0; k < 3; ++k) {
    const double lam = es.eigenvalues()[k];
    if (lam > 1e-12 * (1.0 + top))
      pinv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / lam;
  }
  return pinv;
}

// Additive source factoring: arrival times are updated relative to reference
// cones T0(x) = min_s [ t_s + |x - x_s| in the source-tensor metric ]. The
// correction T - T0 is smooth where the true front is, so interpolating it
// linearly along edges avoids the O(h log h) error a point-source kink
// otherwise injects into purely local updates.
struct ReferenceFront {
  std::vector<Vec3> site;
  std::vector<double> time;
  std::vector<Mat3> weight;  // pseudo-inverse of the tensor at each source

  double operator()(const Vec3& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < site.size(); ++s) {
      const Vec3 q = x - site[s];
      best = std::min(best,
                      time[s] + std::sqrt(std::max(0.0, q.dot(weight[s] * q))));
    }
    return best;
  }
};

// Arrival time at corner C fed by the opposite edge A-B:
//   T(lambda) = (1-lambda) u_A + lambda u_B + T0(p(lambda)) + |c - p(lambda)|_M
// with u = T - T0 the factored correction. Every term is convex in lambda, so
// golden-section search plus the endpoints finds the minimum.
inline double local_update(const FimTriangle& tri, int corner, double ta, double tb,
                           const ReferenceFront& ref) {
  const int ia = (corner + 1) % 3, ib = (corner + 2) % 3;
  const Eigen::Vector2d& a = tri.p[ia];
  const Eigen::Vector2d& b = tri.p[ib];
  const Eigen::Vector2d& c = tri.p[corner];
  const Eigen::Vector2d eab = b - a;
  const Eigen::Vector2d eac = c - a;
  const double qa = metric_dot(tri.metric, eab, eab);
  const double qb = metric_dot(tri.metric, eab, eac);
  const double qc = metric_dot(tri.metric, eac, eac);
  auto segment_cost = [&](double lam) {
    return std::sqrt(std::max(0.0, qa * lam * lam - 2.0 * qb * lam + qc));
  };

  const bool fa = std::isfinite(ta), fb = std::isfinite(tb);
  if (!fa && !fb) return std::numeric_limits<double>::infinity();
  if (fa && !fb) return ta + segment_cost(0.0);
  if (!fa && fb) return tb + segment_cost(1.0);

  const Vec3& wa = tri.world[ia];
  const Vec3& wb = tri.world[ib];
  const double ua = ta - ref(wa), ub = tb - ref(wb);
  auto value = [&](double lam) {
    return (1.0 - lam) * ua + lam * ub + ref(wa + lam * (wb - wa)) +
           segment_cost(lam);
  };

  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
  double f1 = value(x1), f2 = value(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = value(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = value(x2);
    }
  }
  return std::min({value(0.0), value(1.0), f1, f2});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Anisotropic eikonal solve sqrt(D grad phi . grad phi) = 1 by the fast
// iterative method: an active list of vertices is swept until each local
// arrival time is a fixed point of the per-triangle update. Vertices are
// processed in ascending index order, so results are deterministic. Updates
// are source-factored (see ReferenceFront), which removes the usual accuracy
// loss around point sources.
//
// Known limitation: triangles that are obtuse under the metric couple
// non-adjacent fronts and are not split; on such meshes accuracy degrades
// gracefully rather than failing.

inline ActivationMap solve_fim(const TriMesh& mesh,
                               const ConductivityTensorField& field,
                               const std::vector<SourcePoint>& sources,
                               double tol_rel = 1e-9) {
  const int nv = mesh.vertex_count();
  if (sources.empty()) throw std::invalid_argument("solve_fim: no sources given");
  for (const SourcePoint& s : sources)
    if (s.vertex < 0 || s.vertex >= nv)
      throw std::invalid_argument("solve_fim: source vertex " +
                                  std::to_string(s.vertex) + " out of range");
  if (static_cast<int>(field.vertex_tensors.size()) != nv)
    throw std::invalid_argument("solve_fim: tensor field does not match mesh");

  // Per-triangle 2-D geometry and inverted tensors.
  std::vector<detail::FimTriangle> tris(mesh.triangle_count());
  double max_eig = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto frame = ConductivityTensorField::triangle_frame(mesh, t);
    const Vec3& origin = mesh.vertex(tri[0]);
    for (int k = 0; k < 3; ++k) {
      tris[t].p[k] = frame.transpose() * (mesh.vertex(tri[k]) - origin);
      tris[t].world[k] = mesh.vertex(tri[k]);
    }
    const Eigen::Matrix2d dp = field.triangle_tensor(mesh, t);
    const double det = dp.determinant();
    if (!(dp(0, 0) > 0.0) || !(det > 0.0))
      throw std::invalid_argument(
          "solve_fim: tensor is not positive definite on triangle " +
          std::to_string(t));
    tris[t].metric = dp.inverse();
    max_eig = std::max(max_eig, dp.trace());
  }
  // Reference time of one edge traversal at top speed; keeps the convergence
  // threshold positive when all source times are zero.
  const double t_ref = mesh.mean_edge_length() / std::sqrt(max_eig);

  detail::ReferenceFront ref;
  for (const SourcePoint& s : sources) {
    ref.site.push_back(mesh.vertex(s.vertex));
    ref.time.push_back(s.time);
    ref.weight.push_back(
        detail::tangential_pseudo_inverse(field.vertex_tensors[s.vertex]));
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> times(nv, kInf);
  std::vector<char> fixed(nv, 0), active(nv, 0);
  for (const SourcePoint& s : sources) {
    times[s.vertex] = std::min(times[s.vertex], s.time);
    fixed[s.vertex] = 1;
  }

  auto update = [&](int v) {
    double best = kInf;
    for (const int t : mesh.triangles_of(v)) {
      const auto& tri = mesh.triangle(t);
      const int corner = tri[0] == v ? 0 : (tri[1] == v ? 1 : 2);
      best = std::min(best, detail::local_update(tris[t], corner,
                                                 times[tri[(corner + 1) % 3]],
                                                 times[tri[(corner + 2) % 3]],
                                                 ref));
    }
    return best;
  };
  auto eps = [&](double ref) {
    return tol_rel * std::max(std::abs(ref), t_ref);
  };

  std::vector<int> list, next;
  for (const SourcePoint& s : sources)
    for (const int w : mesh.neighbors_of(s.vertex))
      if (!fixed[w] && !active[w]) {
        active[w] = 1;
        list.push_back(w);
      }
  std::sort(list.begin(), list.end());

  while (!list.empty()) {
    next.clear();
    for (const int v : list) {
      const double prev = times[v];
      const double cur = update(v);
      if (cur < times[v]) times[v] = cur;
      if (prev - cur <= eps(prev)) {
        active[v] = 0;
        for (const int w : mesh.neighbors_of(v)) {
          if (fixed[w] || active[w]) continue;
          const double cand = update(w);
          if (cand < times[w] - eps(times[w] == kInf ? cand : times[w])) {
            times[w] = cand;
            active[w] = 1;
            next.push_back(w);
          }
        }
      } else {
        next.push_back(v);
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    list.swap(next);
  }

  ActivationMap map;
  map.times = std::move(times);
  map.sources = sources;
  return map;
}

// ---------------------------------------------------------------------------
// Piecewise-linear gradient of a per-vertex field, one vector per triangle.
// Triangles touching an unreached vertex get NaN entries.

inline std::vector<Vec3> map_gradient(const TriMesh& mesh,
                                      const std::vector<double>& values) {
  if (static_cast<int>(values.size()) != mesh.vertex_count())
    throw std::invalid_argument("map_gradient: one value per vertex required");
  std::vector<Vec3> grads(mesh.triangle_count());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const double f0 = values[tri[0]], f1 = values[tri[1]], f2 = values[tri[2]];
    if (!std::isfinite(f0) || !std::isfinite(f1) || !std::isfinite(f2)) {
      grads[t] = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const Vec3 sum = f0 * (mesh.vertex(tri[2]) - mesh.vertex(tri[1])) +
                     f1 * (mesh.vertex(tri[0]) - mesh.vertex(tri[2])) +
                     f2 * (mesh.vertex(tri[1]) - mesh.vertex(tri[0]));
    grads[t] = mesh.normal(t).cross(sum) / (2.0 * mesh.area(t));
  }
  return grads;
}

// Per-triangle local conduction speed 1 / |grad phi|. Triangles whose
// gradient is missing or shorter than 1e-9 are flagged undefined instead of
// contributing huge speeds.

struct LocalSpeed {
  std::vector<double> speed;
  std::vector<char> defined;
};

inline LocalSpeed local_cv(const TriMesh& mesh, const std::vector<double>& values) {
  const auto grads = map_gradient(mesh, values);
  LocalSpeed out;
  out.speed.assign(grads.size(), 0.0);
  out.defined.assign(grads.size(), 0);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    const double n = grads[t].norm();
    if (std::isfinite(n) && n > 1e-9) {
      out.speed[t] = 1.0 / n;
      out.defined[t] = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form fields for a constant tensor on a flat domain, used as solver
// oracles and to build the isotropic-indistinguishability fixture.
//
// With constant SPD D and a point source at the origin,
//   phi(x) = sqrt(x . D^{-1} x)
// solves the anisotropic eikonal equation exactly.

inline double analytic_constant_tensor_time(const Eigen::Matrix2d& d,
                                            const Eigen::Vector2d& x) {
  const double det = d.determinant();
  if (!(d(0, 0) > 0.0) || !(det > 0.0))
    throw std::invalid_argument("analytic map: tensor must be positive definite");
  return std::sqrt(std::max(0.0, x.dot(d.inverse() * x)));
}

inline Eigen::Vector2d analytic_constant_tensor_gradient(const Eigen::Matrix2d& d,
                                                         const Eigen::Vector2d& x) {
  const double phi = analytic_constant_tensor_time(d, x);
  if (!(phi > 0.0))
    throw std::invalid_argument("analytic map: gradient undefined at the source");
  return d.inverse() * x / phi;
}

// Squared speed of the rotationally-symmetric tensor field
//   D2(x) = theta2(x)^2 I,   theta2^2 = (x . D^{-1} x) / |D^{-1} x|^2,
// which reproduces phi(x) exactly: an anisotropic map indistinguishable from
// an isotropic one given a single source.
inline double isotropic_equivalent_speed_squared(const Eigen::Matrix2d& d,
                                                 const Eigen::Vector2d& x) {
  const Eigen::Vector2d w = d.inverse() * x;
  const double denom = w.squaredNorm();
  if (!(denom > 0.0))
    throw std::invalid_argument("isotropic equivalent: undefined at the source");
  return x.dot(w) / denom;
}

// Tangential 3x3 versions for points in the plane with unit normal n.
inline double analytic_constant_tensor_time(const Mat3& d, const Vec3& n,
                                            const Vec3& x) {
  Eigen::Matrix<double, 3, 2> b;
  b.col(0) = n.unitOrthogonal();
  b.col(1) = n.cross(b.col(0));
  if (std::abs(n.dot(x)) > 1e-9 * (1.0 + x.norm()))
    throw std::invalid_argument("analytic map: point is off the tangent plane");
  const Eigen::Matrix2d d2 = b.transpose() * d * b;
  return analytic_constant_tensor_time(d2, (b.transpose() * x).eval());
}

}  // namespace fiberfit
