#pragma once

#include <cmath>
#include <numbers>

#include "fiberfit/eikonal.hpp"
#include "fiberfit/mesh_io.hpp"
#include "fiberfit/neural_field.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Classical per-vertex tensor fit: given the tangential gradients of M
// activation maps at one vertex, find (a, e1, e2) minimizing
//   F = sum_m (sqrt(e1 (l.g_m)^2 + e2 (t.g_m)^2) - 1)^2,
// i.e. make every map satisfy the unit eikonal condition locally. A coarse
// scan over the fiber angle (least-squares speeds at each angle) seeds a
// damped Gauss-Newton refinement.

struct FitReport {
  FiberParams params;
  Mat3 tensor = Mat3::Zero();  // world-space, tangential
  double residual = 0.0;       // F at the minimum
  int rank = 0;                // rank of the gradient direction set
  double condition = 0.0;      // singular value ratio of that set
  int used = 0;                // gradients entering the fit
  bool unique = false;
};

namespace detail {

struct Fit2d {
  double psi = 0.0, e1 = 1.0, e2 = 1.0;
};

inline double fit_objective(const std::vector<Eigen::Vector2d>& g, const Fit2d& f) {
  const Eigen::Vector2d l(std::cos(f.psi), std::sin(f.psi));
  const Eigen::Vector2d t(-std::sin(f.psi), std::cos(f.psi));
  double obj = 0.0;
  for (const auto& p : g) {
    const double lg = l.dot(p), tg = t.dot(p);
    const double r = std::sqrt(std::max(0.0, f.e1 * lg * lg + f.e2 * tg * tg)) - 1.0;
    obj += r * r;
  }
  return obj;
}

// Nonnegative least squares for (e1, e2) with the angle frozen, fitting the
// squared speeds to one.
inline void fit_speeds_at_angle(const std::vector<Eigen::Vector2d>& g, Fit2d& f) {
  const Eigen::Vector2d l(std::cos(f.psi), std::sin(f.psi));
  const Eigen::Vector2d t(-std::sin(f.psi), std::cos(f.psi));
  Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
  Eigen::Vector2d atb = Eigen::Vector2d::Zero();
  for (const auto& p : g) {
    const Eigen::Vector2d row(std::pow(l.dot(p), 2), std::pow(t.dot(p), 2));
    ata += row * row.transpose();
    atb += row;
  }
  ata.diagonal().array() += 1e-12;
  Eigen::Vector2d e = ata.ldlt().solve(atb);
  f.e1 = std::max(0.0, e[0]);
  f.e2 = std::max(0.0, e[1]);
}

}  // namespace detail

inline FitReport fit_tensor_from_gradients(const std::vector<Vec3>& gradients,
                                           const Vec3& v1, const Vec3& v2) {
  FitReport rep;

  std::vector<Eigen::Vector2d> g;
  for (const Vec3& w : gradients) {
    const Eigen::Vector2d p(w.dot(v1), w.dot(v2));
    if (p.norm() > 1e-12 && p.allFinite()) g.push_back(p);
  }
  rep.used = static_cast<int>(g.size());
  if (g.empty()) return rep;

  // Direction diagnostics: second moments of the unit gradient directions.
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : g) cov += p.normalized() * p.normalized().transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double s_min = std::max(0.0, eig.eigenvalues()[0]);
  const double s_max = std::max(1e-300, eig.eigenvalues()[1]);
  rep.rank = s_min > 1e-12 * s_max ? 2 : 1;
  rep.condition = s_max / std::max(s_min, 1e-300);

  int distinct = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    bool fresh = true;
    for (std::size_t j = 0; j < i && fresh; ++j) {
      const Eigen::Vector2d a = g[i].normalized(), b = g[j].normalized();
      if (std::abs(a.x() * b.y() - a.y() * b.x()) < 1e-9) fresh = false;
    }
    if (fresh) ++distinct;
  }
  rep.unique = distinct >= 3 && rep.rank == 2;

  // Coarse angle scan.
  detail::Fit2d best;
  double best_obj = std::numeric_limits<double>::infinity();
  constexpr int kAngles = 65;
  for (int k = 0; k < kAngles; ++k) {
    detail::Fit2d cand;
    cand.psi = std::numbers::pi * k / kAngles;
    detail::fit_speeds_at_angle(g, cand);
    const double obj = detail::fit_objective(g, cand);
    if (obj < best_obj) {
      best_obj = obj;
      best = cand;
    }
  }

  // Damped Gauss-Newton on (psi, e1, e2).
  double lambda = 1e-6;
  for (int it = 0; it < 60; ++it) {
    const Eigen::Vector2d l(std::cos(best.psi), std::sin(best.psi));
    const Eigen::Vector2d t(-std::sin(best.psi), std::cos(best.psi));
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    for (const auto& p : g) {
      const double lg = l.dot(p), tg = t.dot(p);
      const double s = std::max(1e-300, best.e1 * lg * lg + best.e2 * tg * tg);
      const double speed = std::sqrt(s);
      const double r = speed - 1.0;
      Eigen::Vector3d row;
      // d l/d psi = t and d t/d psi = -l, so d s/d psi telescopes to
      // 2 (e1 - e2) lg tg.
      row[0] = (best.e1 - best.e2) * lg * tg / speed;
      row[1] = lg * lg / (2.0 * speed);
      row[2] = tg * tg / (2.0 * speed);
      jtj += row * row.transpose();
      jtr += row * r;
    }
    bool moved = false;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::Matrix3d damped = jtj;
      damped.diagonal() += lambda * Eigen::Vector3d::Ones();
      const Eigen::Vector3d step = damped.ldlt().solve(-jtr);
      detail::Fit2d cand = best;
      cand.psi += step[0];
      cand.e1 = std::max(0.0, cand.e1 + step[1]);
      cand.e2 = std::max(0.0, cand.e2 + step[2]);
      const double obj = detail::fit_objective(g, cand);
      if (obj <= best_obj) {
        const double gain = best_obj - obj;
        best = cand;
        best_obj = obj;
        lambda = std::max(1e-12, lambda * 0.3);
        moved = true;
        if (gain < 1e-16 * (1.0 + best_obj)) it = 60;
        break;
      }
      lambda *= 10.0;
    }
    if (!moved) break;
  }

  // Wrap psi into [0, pi) so a = cos(psi) pairs with sin(psi) >= 0.
  best.psi = std::fmod(best.psi, std::numbers::pi);
  if (best.psi < 0.0) best.psi += std::numbers::pi;
  rep.params.a = std::clamp(std::cos(best.psi), -1.0, 1.0);
  rep.params.e1 = best.e1;
  rep.params.e2 = best.e2;
  rep.residual = best_obj;
  rep.tensor = assemble_tensor(rep.params, v1, v2);
  return rep;
}

// ---------------------------------------------------------------------------
// Error metrics.

// Acute angle between two fiber axes (sign of either vector is irrelevant),
// in degrees.
inline double fiber_angle_error(const Vec3& estimated, const Vec3& truth) {
  const double ne = estimated.norm(), nt = truth.norm();
  if (!(ne > 0.0) || !(nt > 0.0))
    throw std::invalid_argument("fiber_angle_error: zero-length direction");
  const double c = std::clamp(std::abs(estimated.dot(truth)) / (ne * nt), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline double map_rmse(const std::vector<double>& predicted,
                       const std::vector<double>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("map_rmse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / predicted.size());
}

// Additive Gaussian measurement noise on sample times.
inline void add_noise(std::vector<SampleRow>& rows, double sigma,
                      std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("add_noise: negative sigma");
  if (sigma == 0.0) return;
  Rng rng(seed);
  for (SampleRow& r : rows) r.time_ms += normal_sample(rng, 0.0, sigma);
}

// ---------------------------------------------------------------------------
// Generalization check: simulate an activation map from a pacing site unseen
// during training and compare against its ground truth.

struct UnseenMapReport {
  ActivationMap predicted;
  double rmse = 0.0;
};

inline UnseenMapReport validate_unseen_map(const TriMesh& mesh,
                                           const ConductivityTensorField& recovered,
                                           const SourcePoint& source,
                                           const std::vector<double>& truth_times) {
  UnseenMapReport rep;
  rep.predicted = solve_fim(mesh, recovered, {source});
  rep.rmse = map_rmse(rep.predicted.times, truth_times);
  return rep;
}

// Network outputs (a, e1, e2) sampled at every vertex.
inline std::vector<FiberParams> eval_fiber_params(const NeuralField& dnet,
                                                  const TriMesh& mesh) {
  std::vector<FiberParams> out(mesh.vertex_count());
  MlpWorkspace ws;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    dnet.eval(mesh.vertex(v), ws, false);
    out[v] = {std::clamp(ws.y[0], -1.0, 1.0), ws.y[1], ws.y[2]};
  }
  return out;
}

}  // namespace fiberfit
