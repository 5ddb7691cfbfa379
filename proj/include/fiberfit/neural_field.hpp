#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fiberfit/mesh.hpp"
#include "fiberfit/util.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Small fully-connected networks with tanh hidden layers and per-channel
// output heads. Besides plain evaluation, the module computes the exact
// input Jacobian in the forward pass and backpropagates losses that depend on
// both the outputs and that Jacobian (the eikonal residual does), so every
// training gradient is exact rather than finite-differenced.

enum class HeadKind { Identity, Sigmoid, Tanh, ScaledSigmoid };

inline std::string head_name(HeadKind k) {
  switch (k) {
    case HeadKind::Identity: return "identity";
    case HeadKind::Sigmoid: return "sigmoid";
    case HeadKind::Tanh: return "tanh";
    case HeadKind::ScaledSigmoid: return "scaled_sigmoid";
  }
  return "?";
}

inline HeadKind head_from_name(const std::string& s) {
  if (s == "identity") return HeadKind::Identity;
  if (s == "sigmoid") return HeadKind::Sigmoid;
  if (s == "tanh") return HeadKind::Tanh;
  if (s == "scaled_sigmoid") return HeadKind::ScaledSigmoid;
  throw std::invalid_argument("unknown head kind '" + s + "'");
}

struct MlpSpec {
  int input_dim = 2;
  std::vector<int> hidden;   // widths of the tanh layers
  std::vector<HeadKind> heads;
  double cap = 1.0;          // output scale of ScaledSigmoid heads

  int output_dim() const { return static_cast<int>(heads.size()); }

  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    s.push_back(input_dim);
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(output_dim());
    return s;
  }

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("mlp: input_dim must be >= 1");
    if (heads.empty()) throw std::invalid_argument("mlp: at least one output head");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("mlp: hidden width must be >= 1");
    if (!(cap > 0.0)) throw std::invalid_argument("mlp: cap must be positive");
  }
};

struct MlpParams {
  std::vector<Eigen::MatrixXd> w;  // w[k] maps layer k to k+1
  std::vector<Eigen::VectorXd> b;

  static MlpParams zeros(const MlpSpec& spec) {
    const auto sizes = spec.layer_sizes();
    MlpParams p;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      p.w.emplace_back(Eigen::MatrixXd::Zero(sizes[k + 1], sizes[k]));
      p.b.emplace_back(Eigen::VectorXd::Zero(sizes[k + 1]));
    }
    return p;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& m : w) n += m.size();
    for (const auto& v : b) n += v.size();
    return n;
  }
};

// Glorot-uniform weights, zero biases.
inline MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  MlpParams p = MlpParams::zeros(spec);
  Rng rng(seed);
  for (auto& m : p.w) {
    const double r = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = uniform_in(rng, -r, r);
  }
  return p;
}

namespace detail {

// Value and first two derivatives of an output head at pre-activation u.
inline void head_eval(HeadKind kind, double cap, double u, double& val, double& d1,
                      double& d2) {
  switch (kind) {
    case HeadKind::Identity:
      val = u;
      d1 = 1.0;
      d2 = 0.0;
      return;
    case HeadKind::Tanh: {
      const double t = std::tanh(u);
      val = t;
      d1 = 1.0 - t * t;
      d2 = -2.0 * t * d1;
      return;
    }
    case HeadKind::Sigmoid:
    case HeadKind::ScaledSigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-u));
      const double scale = kind == HeadKind::ScaledSigmoid ? cap : 1.0;
      val = scale * s;
      d1 = scale * s * (1.0 - s);
      d2 = d1 * (1.0 - 2.0 * s);
      return;
    }
  }
}

}  // namespace detail

// Per-evaluation caches. u/z hold pre-/post-activations, ju/jz their exact
// Jacobians with respect to the (scaled) input.
struct MlpWorkspace {
  std::vector<Eigen::VectorXd> u, z;
  std::vector<Eigen::MatrixXd> ju, jz;
  Eigen::VectorXd y;
  Eigen::MatrixXd jy;
  bool has_jacobian = false;

  // Backward scratch, sized on demand.
  Eigen::VectorXd ubar, zbar;
  Eigen::MatrixXd jubar, jzbar;
};

inline void mlp_forward(const MlpSpec& spec, const MlpParams& params,
                        const Eigen::VectorXd& x, MlpWorkspace& ws,
                        bool with_jacobian) {
  const std::size_t layers = params.w.size();
  ws.u.resize(layers + 1);
  ws.z.resize(layers + 1);
  ws.z[0] = x;
  if (with_jacobian) {
    ws.ju.resize(layers + 1);
    ws.jz.resize(layers + 1);
    ws.jz[0] = Eigen::MatrixXd::Identity(spec.input_dim, spec.input_dim);
  }
  for (std::size_t k = 1; k <= layers; ++k) {
    ws.u[k] = params.w[k - 1] * ws.z[k - 1] + params.b[k - 1];
    if (with_jacobian) ws.ju[k] = params.w[k - 1] * ws.jz[k - 1];
    if (k < layers) {
      ws.z[k] = ws.u[k].array().tanh();
      if (with_jacobian) {
        const Eigen::ArrayXd d1 = 1.0 - ws.z[k].array().square();
        ws.jz[k] = d1.matrix().asDiagonal() * ws.ju[k];
      }
    }
  }
  const int nout = spec.output_dim();
  ws.y.resize(nout);
  if (with_jacobian) ws.jy.resize(nout, spec.input_dim);
  for (int c = 0; c < nout; ++c) {
    double val, d1, d2;
    detail::head_eval(spec.heads[c], spec.cap, ws.u[layers][c], val, d1, d2);
    ws.y[c] = val;
    if (with_jacobian) ws.jy.row(c) = d1 * ws.ju[layers].row(c);
  }
  ws.has_jacobian = with_jacobian;
}

inline Eigen::VectorXd forward(const MlpSpec& spec, const MlpParams& params,
                               const Eigen::VectorXd& x) {
  MlpWorkspace ws;
  mlp_forward(spec, params, x, ws, false);
  return ws.y;
}

inline Eigen::MatrixXd input_gradient(const MlpSpec& spec, const MlpParams& params,
                                      const Eigen::VectorXd& x) {
  MlpWorkspace ws;
  mlp_forward(spec, params, x, ws, true);
  return ws.jy;
}

// Reverse pass for one evaluation point. ybar / jbar are the adjoints of
// ws.y and ws.jy; parameter gradients are accumulated into grad. Requires a
// workspace filled by mlp_forward(..., with_jacobian = true).
inline void accumulate_loss_gradient(const MlpSpec& spec, const MlpParams& params,
                                     const MlpWorkspace& ws,
                                     const Eigen::VectorXd& ybar,
                                     const Eigen::MatrixXd& jbar, MlpParams& grad,
                                     MlpWorkspace& scratch) {
  if (!ws.has_jacobian)
    throw std::invalid_argument("mlp backward: forward pass lacked the Jacobian");
  const std::size_t layers = params.w.size();
  const int nout = spec.output_dim();

  scratch.ubar.resize(nout);
  scratch.jubar.resize(nout, spec.input_dim);
  for (int c = 0; c < nout; ++c) {
    double val, d1, d2;
    detail::head_eval(spec.heads[c], spec.cap, ws.u[layers][c], val, d1, d2);
    scratch.ubar[c] =
        d1 * ybar[c] + d2 * ws.ju[layers].row(c).dot(jbar.row(c));
    scratch.jubar.row(c) = d1 * jbar.row(c);
  }

  for (std::size_t k = layers; k >= 1; --k) {
    grad.w[k - 1] += scratch.ubar * ws.z[k - 1].transpose() +
                     scratch.jubar * ws.jz[k - 1].transpose();
    grad.b[k - 1] += scratch.ubar;
    if (k == 1) break;
    scratch.zbar.noalias() = params.w[k - 1].transpose() * scratch.ubar;
    scratch.jzbar.noalias() = params.w[k - 1].transpose() * scratch.jubar;
    // Through z = tanh(u), jz = diag(1 - z^2) ju.
    const Eigen::Index width = ws.u[k - 1].size();
    scratch.ubar.resize(width);
    scratch.jubar.resize(width, spec.input_dim);
    for (Eigen::Index i = 0; i < width; ++i) {
      const double t = ws.z[k - 1][i];
      const double d1 = 1.0 - t * t;
      const double d2 = -2.0 * t * d1;
      scratch.ubar[i] = d1 * scratch.zbar[i] +
                        d2 * ws.ju[k - 1].row(i).dot(scratch.jzbar.row(i));
      scratch.jubar.row(i) = d1 * scratch.jzbar.row(i);
    }
  }
}

// ---------------------------------------------------------------------------
// A network attached to world coordinates: inputs are shifted/scaled into
// roughly [-1, 1] before entering the MLP, and Jacobians are reported in
// world units.

struct InputScaling {
  Eigen::VectorXd center, halfwidth;

  static InputScaling none(int dim) {
    InputScaling s;
    s.center = Eigen::VectorXd::Zero(dim);
    s.halfwidth = Eigen::VectorXd::Ones(dim);
    return s;
  }

  static InputScaling for_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    InputScaling s;
    s.center = 0.5 * (lo + hi);
    s.halfwidth = (0.5 * (hi - lo)).cwiseMax(1e-12);
    return s;
  }
};

struct NeuralField {
  MlpSpec spec;
  MlpParams params;
  InputScaling scaling;

  Eigen::VectorXd scale_input(const Vec3& p) const {
    Eigen::VectorXd x(spec.input_dim);
    for (int i = 0; i < spec.input_dim; ++i)
      x[i] = (p[i] - scaling.center[i]) / scaling.halfwidth[i];
    return x;
  }

  void eval(const Vec3& p, MlpWorkspace& ws, bool with_jacobian) const {
    mlp_forward(spec, params, scale_input(p), ws, with_jacobian);
    if (with_jacobian)
      for (int i = 0; i < spec.input_dim; ++i) ws.jy.col(i) /= scaling.halfwidth[i];
  }

  // World-space gradient of channel c, zero-padded to 3-D.
  Vec3 channel_gradient(const MlpWorkspace& ws, int c) const {
    Vec3 g = Vec3::Zero();
    for (int i = 0; i < spec.input_dim; ++i) g[i] = ws.jy(c, i);
    return g;
  }

  // jbar is the adjoint of the world-space ws.jy.
  void accumulate_gradient(const MlpWorkspace& ws, const Eigen::VectorXd& ybar,
                           Eigen::MatrixXd jbar, MlpParams& grad,
                           MlpWorkspace& scratch) const {
    for (int i = 0; i < spec.input_dim; ++i) jbar.col(i) /= scaling.halfwidth[i];
    accumulate_loss_gradient(spec, params, ws, ybar, jbar, grad, scratch);
  }
};

}  // namespace fiberfit
