#pragma once

#include <cmath>

#include "fiberfit/mesh.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Local conductivity parameterization on the tangent plane.
//
// A point carries three scalars: a fiber angle encoded as a = cos(angle to
// v1), and the squared conduction speeds e1 (along the fiber) and e2 (across
// it). Together with an orthonormal tangent basis (v1, v2) they assemble the
// rank-2 symmetric tensor D = e1 * l l^T + e2 * t t^T whose directional speed
// is theta(p) = sqrt(p . D p).

struct FiberParams {
  double a = 1.0;   // cosine of the in-plane fiber angle, in [-1, 1]
  double e1 = 1.0;  // squared speed along the fiber, >= 0
  double e2 = 1.0;  // squared speed across the fiber, >= 0
};

inline void check_fiber_params(const FiberParams& p) {
  if (!(p.a >= -1.0 && p.a <= 1.0))
    throw std::invalid_argument("fiber params: a must lie in [-1, 1]");
  if (!(p.e1 >= 0.0) || !(p.e2 >= 0.0))
    throw std::invalid_argument("fiber params: squared speeds must be >= 0");
}

// Fiber direction l and in-plane transverse direction t:
//   l =  a v1 + sqrt(1 - a^2) v2,
//   t = -sqrt(1 - a^2) v1 + a v2,
// a rotation of (v1, v2), so (l, t) stays orthonormal.
inline void fiber_and_transverse(double a, const Vec3& v1, const Vec3& v2, Vec3& l,
                                 Vec3& t) {
  if (!(a >= -1.0 && a <= 1.0))
    throw std::invalid_argument("fiber_and_transverse: a must lie in [-1, 1]");
  const double s = std::sqrt(std::max(0.0, 1.0 - a * a));
  l = a * v1 + s * v2;
  t = -s * v1 + a * v2;
}

// d l / d a and d t / d a. The 1/sqrt(1 - a^2) factor blows up at |a| = 1;
// it is clamped here (derivative path only, values are unaffected) so
// gradient-based fitting stays finite when the fiber aligns with v1.
inline void fiber_and_transverse_da(double a, const Vec3& v1, const Vec3& v2,
                                    Vec3& dl_da, Vec3& dt_da) {
  const double s = std::sqrt(std::max(1e-24, 1.0 - a * a));
  dl_da = v1 - (a / s) * v2;
  dt_da = (a / s) * v1 + v2;
}

inline Mat3 assemble_tensor(const FiberParams& p, const Vec3& v1, const Vec3& v2) {
  check_fiber_params(p);
  Vec3 l, t;
  fiber_and_transverse(p.a, v1, v2, l, t);
  return p.e1 * l * l.transpose() + p.e2 * t * t.transpose();
}

// Directional conduction speed for a unit direction p.
inline double conduction_velocity(const Mat3& d, const Vec3& p) {
  return std::sqrt(std::max(0.0, p.dot(d * p)));
}

// Unit vector along the faster axis (the fiber when e1 >= e2).
inline Vec3 fiber_direction(const FiberParams& p, const Vec3& v1, const Vec3& v2) {
  check_fiber_params(p);
  Vec3 l, t;
  fiber_and_transverse(p.a, v1, v2, l, t);
  return p.e1 >= p.e2 ? l : t;
}

// Ceiling on the squared speeds produced by the network head; 2.25 caps the
// conduction speed at 1.5 m/s.
inline constexpr double kDefaultSpeedSquaredCap = 2.25;

}  // namespace fiberfit
