#pragma once

#include "fiberfit/eikonal.hpp"
#include "fiberfit/mesh.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Latin hypercube sampling: one point per stratum per axis, so n points cover
// every axis with n evenly occupied bins.

inline std::vector<Eigen::VectorXd> latin_hypercube_sample(
    int n, const std::vector<std::pair<double, double>>& bounds,
    std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("latin_hypercube_sample: need n >= 1");
  if (bounds.empty())
    throw std::invalid_argument("latin_hypercube_sample: empty bounds");
  for (const auto& [lo, hi] : bounds)
    if (!(lo <= hi))
      throw std::invalid_argument("latin_hypercube_sample: inverted bounds");
  const int dim = static_cast<int>(bounds.size());
  Rng rng(seed);
  std::vector<std::vector<int>> strata(dim, std::vector<int>(n));
  for (int d = 0; d < dim; ++d) {
    for (int i = 0; i < n; ++i) strata[d][i] = i;
    shuffle_in_place(strata[d], rng);
  }
  std::vector<Eigen::VectorXd> pts(n, Eigen::VectorXd(dim));
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) {
      const auto& [lo, hi] = bounds[d];
      pts[i][d] = lo + (strata[d][i] + uniform01(rng)) / n * (hi - lo);
    }
  return pts;
}

// Convenience form over the mesh bounding box (x/y for planar meshes, x/y/z
// otherwise), projected back onto the surface.
inline std::vector<PointSample> latin_hypercube_on_mesh(const TriMesh& mesh, int n,
                                                        std::uint64_t seed) {
  Vec3 lo, hi;
  mesh.bounding_box(lo, hi);
  const bool planar = hi.z() - lo.z() <= 1e-9 * (1.0 + (hi - lo).norm());
  std::vector<std::pair<double, double>> bounds = {{lo.x(), hi.x()},
                                                   {lo.y(), hi.y()}};
  if (!planar) bounds.push_back({lo.z(), hi.z()});
  const auto raw = latin_hypercube_sample(n, bounds, seed);
  std::vector<Vec3> pts;
  pts.reserve(raw.size());
  for (const auto& p : raw)
    pts.emplace_back(p[0], p[1], planar ? lo.z() : p[2]);
  std::vector<PointSample> out;
  out.reserve(pts.size());
  for (const auto& proj : project_points(mesh, pts)) out.push_back(proj.sample);
  return out;
}

// ---------------------------------------------------------------------------
// Farthest-point site selection under the isotropic unit-speed geodesic
// metric: starting from a seed vertex, repeatedly add the vertex farthest
// from everything chosen so far (ties break to the lowest index).

inline std::vector<int> farthest_point_sample(const TriMesh& mesh, int k,
                                              int start_vertex) {
  if (k < 1) throw std::invalid_argument("farthest_point_sample: need k >= 1");
  if (start_vertex < 0 || start_vertex >= mesh.vertex_count())
    throw std::invalid_argument("farthest_point_sample: start vertex out of range");
  const auto field = ConductivityTensorField::isotropic(mesh, 1.0);
  std::vector<int> selected = {start_vertex};
  std::vector<double> dist = solve_fim(mesh, field, {{start_vertex, 0.0}}).times;
  while (static_cast<int>(selected.size()) < k) {
    int best = 0;
    for (int v = 1; v < mesh.vertex_count(); ++v)
      if (dist[v] > dist[best]) best = v;
    selected.push_back(best);
    const auto d = solve_fim(mesh, field, {{best, 0.0}}).times;
    for (int v = 0; v < mesh.vertex_count(); ++v) dist[v] = std::min(dist[v], d[v]);
  }
  return selected;
}

// ---------------------------------------------------------------------------
// Uniform-by-area sampling of the surface itself.

inline std::vector<PointSample> sample_surface_uniform(const TriMesh& mesh, int n,
                                                       std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_surface_uniform: need n >= 1");
  std::vector<double> cum(mesh.triangle_count());
  double acc = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    acc += mesh.area(t);
    cum[t] = acc;
  }
  Rng rng(seed);
  std::vector<PointSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double r = uniform01(rng) * acc;
    const int t = static_cast<int>(
        std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const Vec3 bary(1.0 - r1, r1 * (1.0 - r2), r1 * r2);
    out.push_back(PointSample::at(mesh, std::min(t, mesh.triangle_count() - 1), bary));
  }
  return out;
}

}  // namespace fiberfit
