#pragma once

#include <cmath>

#include "fiberfit/conductivity.hpp"
#include "fiberfit/eikonal.hpp"
#include "fiberfit/mesh.hpp"
#include "fiberfit/neural_field.hpp"
#include "fiberfit/tangent_basis.hpp"

namespace fiberfit {

// ---------------------------------------------------------------------------
// Huber-smoothed total-variation penalty of a spatial gradient q:
// quadratic inside |q| <= delta, linear outside.

inline double huber(const Vec3& q, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber: delta must be positive");
  const double n = q.norm();
  return n <= delta ? n * n / (2.0 * delta) : n - 0.5 * delta;
}

inline Vec3 huber_gradient(const Vec3& q, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber: delta must be positive");
  const double n = q.norm();
  return n <= delta ? q / delta : Vec3(q / n);
}

// ---------------------------------------------------------------------------
// Training data: per-map sparse samples (times divided by T_max) plus the
// shared collocation set where the physics and smoothness terms are enforced.

struct DataPoint {
  PointSample where;
  double value = 0.0;  // normalized activation time
};

struct MapData {
  std::vector<DataPoint> samples;
  SourcePoint source;  // provenance, not used by the loss
};

struct CollocationPoint {
  Vec3 position = Vec3::Zero();
  Vec3 v1 = Vec3::UnitX(), v2 = Vec3::UnitY();
};

struct Dataset {
  std::vector<MapData> maps;
  std::vector<CollocationPoint> collocation;
  double t_max = 1.0;  // raw-time normalization constant
  int input_dim = 2;
  Eigen::VectorXd box_lo, box_hi;  // world box used for input scaling
};

// Divides every sample time by the largest one; returns that T_max.
inline double normalize_times(Dataset& ds) {
  double t_max = 0.0;
  for (const auto& map : ds.maps)
    for (const auto& s : map.samples) t_max = std::max(t_max, s.value);
  if (!(t_max > 0.0))
    throw std::invalid_argument("normalize_times: no positive activation time");
  for (auto& map : ds.maps)
    for (auto& s : map.samples) s.value /= t_max;
  ds.t_max = t_max;
  return t_max;
}

// Default collocation set: every vertex plus every triangle barycenter.
inline std::vector<CollocationPoint> default_collocation(const TriMesh& mesh,
                                                         const TangentBasis& basis) {
  std::vector<CollocationPoint> pts;
  pts.reserve(mesh.vertex_count() + mesh.triangle_count());
  for (int v = 0; v < mesh.vertex_count(); ++v)
    pts.push_back({mesh.vertex(v), basis.v1[v], basis.v2[v]});
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const PointSample bc = PointSample::at(mesh, t, Vec3::Constant(1.0 / 3.0));
    CollocationPoint p;
    Vec3 n;
    p.position = bc.position;
    interpolate_basis(mesh, basis, bc, p.v1, p.v2, n);
    pts.push_back(p);
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Configuration of one training run.

struct TrainingConfig {
  std::vector<int> phi_hidden = {10, 10, 10, 10, 10};
  std::vector<int> d_hidden = {5, 5, 5, 5, 5};
  double cap = kDefaultSpeedSquaredCap;

  double alpha_m = 1e-2;  // eikonal-consistency weight
  double alpha_e = 1e-5;  // speed smoothness weight
  double alpha_a = 1e-9;  // angle smoothness weight
  double delta_e = 1e-3;
  double delta_a = 1e-3;

  int iterations = 3000;
  int batch = 32;
  double learning_rate = 1e-3;
  int history_every = 100;
  std::uint64_t seed = 0;

  MlpSpec phi_spec(int input_dim) const {
    MlpSpec s;
    s.input_dim = input_dim;
    s.hidden = phi_hidden;
    s.heads = {HeadKind::Sigmoid};
    return s;
  }

  MlpSpec d_spec(int input_dim) const {
    MlpSpec s;
    s.input_dim = input_dim;
    s.hidden = d_hidden;
    s.heads = {HeadKind::Tanh, HeadKind::ScaledSigmoid, HeadKind::ScaledSigmoid};
    s.cap = cap;
    return s;
  }

  void validate() const {
    if (iterations < 0 || batch < 1 || history_every < 1)
      throw ConfigError("training config: bad iteration/batch settings");
    if (!(learning_rate > 0.0)) throw ConfigError("training config: bad learning rate");
    if (!(delta_e > 0.0) || !(delta_a > 0.0))
      throw ConfigError("training config: Huber deltas must be positive");
    if (alpha_m < 0.0 || alpha_e < 0.0 || alpha_a < 0.0)
      throw ConfigError("training config: negative loss weight");
  }
};

struct LossBreakdown {
  double data = 0.0;  // mean squared misfit, averaged per map
  double eiko = 0.0;  // mean squared eikonal residual
  double cv = 0.0;    // Huber TV of the squared speeds
  double ang = 0.0;   // Huber TV of the fiber-angle cosine

  double total(const TrainingConfig& cfg) const {
    return data + cfg.alpha_m * eiko + cfg.alpha_e * cv + cfg.alpha_a * ang;
  }
};

// Index sets the loss is evaluated on.
struct Batch {
  std::vector<std::vector<int>> data_idx;  // per map, into MapData::samples
  std::vector<int> colloc_idx;             // into Dataset::collocation
};

inline Batch full_batch(const Dataset& ds) {
  Batch b;
  b.data_idx.resize(ds.maps.size());
  for (std::size_t m = 0; m < ds.maps.size(); ++m) {
    b.data_idx[m].resize(ds.maps[m].samples.size());
    for (std::size_t i = 0; i < b.data_idx[m].size(); ++i)
      b.data_idx[m][i] = static_cast<int>(i);
  }
  b.colloc_idx.resize(ds.collocation.size());
  for (std::size_t i = 0; i < b.colloc_idx.size(); ++i)
    b.colloc_idx[i] = static_cast<int>(i);
  return b;
}

// ---------------------------------------------------------------------------
// Four-term loss over a batch:
//   L = L_data + alpha_m L_eiko + alpha_e L_cv + alpha_a L_ang
// with
//   L_data = (1/M) sum_m mean_i (phi_m(x_i) - phi_i)^2,
//   L_eiko = mean_{m,j} (T_max sqrt(grad phi_m . D grad phi_m) - 1)^2,
//   L_cv   = mean_j [H_de(grad e1) + H_de(grad e2)],
//   L_ang  = mean_j H_da(grad a).
// The square root argument is clamped at 1e-12 so collocation points near a
// source (vanishing gradient) cannot produce NaNs.
//
// When gradient sinks are passed, exact parameter gradients of the weighted
// total are accumulated into them.

inline LossBreakdown compute_loss(const Dataset& ds,
                                  const std::vector<NeuralField>& phi,
                                  const NeuralField& dnet,
                                  const TrainingConfig& cfg, const Batch& batch,
                                  std::vector<MlpParams>* phi_grad = nullptr,
                                  MlpParams* d_grad = nullptr) {
  if (phi.size() != ds.maps.size())
    throw std::invalid_argument("compute_loss: one phi network per map required");
  const int n_maps = static_cast<int>(ds.maps.size());
  const bool want_grad = phi_grad != nullptr || d_grad != nullptr;
  if (want_grad && (phi_grad == nullptr || d_grad == nullptr))
    throw std::invalid_argument("compute_loss: need both gradient sinks or none");

  LossBreakdown out;
  MlpWorkspace ws, ws_d, scratch;
  Eigen::VectorXd ybar1(1);
  Eigen::MatrixXd jbar1;

  // Data misfit.
  for (int m = 0; m < n_maps; ++m) {
    const auto& idx = batch.data_idx[m];
    if (idx.empty()) continue;
    const double w = 1.0 / (static_cast<double>(n_maps) * idx.size());
    for (const int i : idx) {
      const DataPoint& pt = ds.maps[m].samples[i];
      phi[m].eval(pt.where.position, ws, want_grad);
      const double r = ws.y[0] - pt.value;
      out.data += w * r * r;
      if (want_grad) {
        ybar1[0] = 2.0 * w * r;
        jbar1 = Eigen::MatrixXd::Zero(1, phi[m].spec.input_dim);
        phi[m].accumulate_gradient(ws, ybar1, jbar1, (*phi_grad)[m], scratch);
      }
    }
  }

  // Collocation terms.
  const std::size_t n_col = batch.colloc_idx.size();
  if (n_col > 0) {
    const double w_e = 1.0 / (static_cast<double>(n_maps) * n_col);
    const double w_c = 1.0 / static_cast<double>(n_col);
    Eigen::VectorXd d_ybar(3);
    Eigen::MatrixXd d_jbar;
    for (const int j : batch.colloc_idx) {
      const CollocationPoint& cp = ds.collocation[j];
      dnet.eval(cp.position, ws_d, true);
      const double a = ws_d.y[0], e1 = ws_d.y[1], e2 = ws_d.y[2];
      Vec3 l, t;
      fiber_and_transverse(a, cp.v1, cp.v2, l, t);

      d_ybar.setZero();
      d_jbar = Eigen::MatrixXd::Zero(3, dnet.spec.input_dim);

      // Smoothness penalties on the world-space gradients of (a, e1, e2).
      const Vec3 grad_a = dnet.channel_gradient(ws_d, 0);
      const Vec3 grad_e1 = dnet.channel_gradient(ws_d, 1);
      const Vec3 grad_e2 = dnet.channel_gradient(ws_d, 2);
      out.cv += w_c * (huber(grad_e1, cfg.delta_e) + huber(grad_e2, cfg.delta_e));
      out.ang += w_c * huber(grad_a, cfg.delta_a);
      if (want_grad) {
        const Vec3 ha = (cfg.alpha_a * w_c) * huber_gradient(grad_a, cfg.delta_a);
        const Vec3 h1 = (cfg.alpha_e * w_c) * huber_gradient(grad_e1, cfg.delta_e);
        const Vec3 h2 = (cfg.alpha_e * w_c) * huber_gradient(grad_e2, cfg.delta_e);
        for (int i = 0; i < dnet.spec.input_dim; ++i) {
          d_jbar(0, i) += ha[i];
          d_jbar(1, i) += h1[i];
          d_jbar(2, i) += h2[i];
        }
      }

      // Eikonal residual of every map at this point.
      for (int m = 0; m < n_maps; ++m) {
        phi[m].eval(cp.position, ws, true);
        const Vec3 g = phi[m].channel_gradient(ws, 0);
        const double lg = l.dot(g), tg = t.dot(g);
        const double s = std::max(e1 * lg * lg + e2 * tg * tg, 1e-12);
        const double speed = std::sqrt(s);
        const double r = ds.t_max * speed - 1.0;
        out.eiko += w_e * r * r;
        if (want_grad) {
          // d residual^2 / d s, with the total-loss weighting folded in.
          const double beta = cfg.alpha_m * w_e * r * ds.t_max / speed;
          const Vec3 gbar = beta * 2.0 * (e1 * lg * l + e2 * tg * t);
          ybar1[0] = 0.0;
          jbar1.resize(1, phi[m].spec.input_dim);
          for (int i = 0; i < phi[m].spec.input_dim; ++i) jbar1(0, i) = gbar[i];
          phi[m].accumulate_gradient(ws, ybar1, jbar1, (*phi_grad)[m], scratch);

          Vec3 dl_da, dt_da;
          fiber_and_transverse_da(a, cp.v1, cp.v2, dl_da, dt_da);
          d_ybar[0] += beta * 2.0 * (e1 * lg * dl_da.dot(g) + e2 * tg * dt_da.dot(g));
          d_ybar[1] += beta * lg * lg;
          d_ybar[2] += beta * tg * tg;
        }
      }

      if (want_grad) dnet.accumulate_gradient(ws_d, d_ybar, d_jbar, *d_grad, scratch);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam optimizer in the shape of the parameter pytree.

struct AdamState {
  MlpParams m, v;
  int step = 0;

  static AdamState zeros(const MlpSpec& spec) {
    return {MlpParams::zeros(spec), MlpParams::zeros(spec), 0};
  }
};

inline void adam_step(MlpParams& params, const MlpParams& grad, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, state.step);
  const double c2 = 1.0 - std::pow(beta2, state.step);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      m(i) = beta1 * m(i) + (1.0 - beta1) * g(i);
      v(i) = beta2 * v(i) + (1.0 - beta2) * g(i) * g(i);
      p(i) -= lr * (m(i) / c1) / (std::sqrt(v(i) / c2) + eps);
    }
  };
  for (std::size_t k = 0; k < params.w.size(); ++k) {
    update(params.w[k], grad.w[k], state.m.w[k], state.v.w[k]);
    update(params.b[k], grad.b[k], state.m.b[k], state.v.b[k]);
  }
}

// ---------------------------------------------------------------------------
// Full optimization loop. Deterministic for a fixed (dataset, config, seed):
// mini-batches are drawn without replacement from per-map decks that are
// reshuffled each epoch.

struct HistoryRow {
  int iteration = 0;
  LossBreakdown terms;
  double total = 0.0;
};

struct TrainResult {
  std::vector<NeuralField> phi;
  NeuralField d;
  std::vector<HistoryRow> history;
  bool diverged = false;
  int iterations_run = 0;
};

namespace detail {

class Deck {
 public:
  Deck(int n, Rng& rng) : rng_(&rng), order_(n) {
    for (int i = 0; i < n; ++i) order_[i] = i;
    shuffle_in_place(order_, *rng_);
  }
  void draw(int k, std::vector<int>& out) {
    out.clear();
    for (int i = 0; i < k && i < static_cast<int>(order_.size()); ++i) {
      if (pos_ == order_.size()) {
        shuffle_in_place(order_, *rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
  }

 private:
  Rng* rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline TrainResult train(const Dataset& ds, const TrainingConfig& cfg) {
  cfg.validate();
  if (ds.maps.empty()) throw std::invalid_argument("train: dataset has no maps");
  if (ds.collocation.empty())
    throw std::invalid_argument("train: dataset has no collocation points");

  Rng master(cfg.seed);
  const InputScaling scaling = InputScaling::for_box(
      ds.box_lo.head(ds.input_dim), ds.box_hi.head(ds.input_dim));

  TrainResult res;
  for (std::size_t m = 0; m < ds.maps.size(); ++m) {
    NeuralField f;
    f.spec = cfg.phi_spec(ds.input_dim);
    f.params = init_params(f.spec, master());
    f.scaling = scaling;
    res.phi.push_back(std::move(f));
  }
  res.d.spec = cfg.d_spec(ds.input_dim);
  res.d.params = init_params(res.d.spec, master());
  res.d.scaling = scaling;

  Rng batch_rng(master());
  std::vector<detail::Deck> data_decks;
  for (const auto& map : ds.maps)
    data_decks.emplace_back(static_cast<int>(map.samples.size()), batch_rng);
  detail::Deck colloc_deck(static_cast<int>(ds.collocation.size()), batch_rng);

  std::vector<AdamState> phi_adam;
  for (const auto& f : res.phi) phi_adam.push_back(AdamState::zeros(f.spec));
  AdamState d_adam = AdamState::zeros(res.d.spec);

  std::vector<MlpParams> phi_grad;
  for (const auto& f : res.phi) phi_grad.push_back(MlpParams::zeros(f.spec));
  MlpParams d_grad = MlpParams::zeros(res.d.spec);

  const Batch everything = full_batch(ds);
  auto record = [&](int iteration) {
    const LossBreakdown terms = compute_loss(ds, res.phi, res.d, cfg, everything);
    res.history.push_back({iteration, terms, terms.total(cfg)});
  };
  record(0);

  std::vector<NeuralField> last_phi = res.phi;
  NeuralField last_d = res.d;

  Batch batch;
  batch.data_idx.resize(ds.maps.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t m = 0; m < ds.maps.size(); ++m)
      data_decks[m].draw(cfg.batch, batch.data_idx[m]);
    colloc_deck.draw(cfg.batch, batch.colloc_idx);

    for (auto& g : phi_grad)
      for (std::size_t k = 0; k < g.w.size(); ++k) {
        g.w[k].setZero();
        g.b[k].setZero();
      }
    for (std::size_t k = 0; k < d_grad.w.size(); ++k) {
      d_grad.w[k].setZero();
      d_grad.b[k].setZero();
    }

    const LossBreakdown terms =
        compute_loss(ds, res.phi, res.d, cfg, batch, &phi_grad, &d_grad);
    if (!std::isfinite(terms.total(cfg))) {
      res.phi = last_phi;
      res.d = last_d;
      res.diverged = true;
      res.iterations_run = it;
      if (res.history.back().iteration != it) record(it);
      return res;
    }
    last_phi = res.phi;
    last_d = res.d;

    for (std::size_t m = 0; m < res.phi.size(); ++m)
      adam_step(res.phi[m].params, phi_grad[m], phi_adam[m], cfg.learning_rate);
    adam_step(res.d.params, d_grad, d_adam, cfg.learning_rate);

    if ((it + 1) % cfg.history_every == 0 || it + 1 == cfg.iterations)
      record(it + 1);
  }
  res.iterations_run = cfg.iterations;
  return res;
}

}  // namespace fiberfit
