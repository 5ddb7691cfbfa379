#pragma once

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "fiberfit/estimators.hpp"
#include "fiberfit/mesh_io.hpp"
#include "fiberfit/sampling.hpp"
#include "fiberfit/trainer.hpp"

namespace fiberfit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// One experiment = (domain, ground-truth fibers, pacing sites, sampling plan,
// training setup). Every field has a CLI flag of the same name.

struct ExperimentConfig {
  // Domain: either a generated grid or a mesh file.
  int grid_n = 35;
  std::string mesh_path;

  // Ground-truth fiber rule.
  std::string fiber_rule = "piecewise";  // piecewise | constant | file
  FiberParams constant_fibers{1.0, 1.0, 0.5};
  std::string fiber_file;

  // Tangent frames: planar meshes default to the global (x, y) frame,
  // curved ones to vector-heat transport.
  std::string basis = "auto";  // auto | planar | vector-heat
  int basis_source = -1;       // -1: largest-area vertex
  Vec3 basis_direction = Vec3::Zero();  // zero: first incident edge
  double basis_t = -1.0;                // <= 0: squared mean edge length

  // Pacing sites.
  std::string source_mode = "lhs";  // lhs | farthest | vertices
  int n_maps = 5;
  std::vector<int> source_vertices;
  int farthest_start = -1;  // -1: seeded random start

  // Measurement sampling.
  int samples_total = 245;
  std::string sample_mode = "auto";  // auto | lhs | area
  bool shared_points = false;        // same locations for every map
  double noise_sigma_ms = 0.0;
  double time_scale = 1.0;  // multiplies simulated times (e.g. into ms)
  std::uint64_t data_seed = 1;

  // Training / evaluation.
  TrainingConfig training;
  int train_maps = -1;     // -1: all generated maps
  int unseen_vertex = -1;  // -1: first unused source, else farthest vertex

  // Locations.
  std::string data_dir;
  std::string out_dir;
  std::string model_path;
  std::string experiment_id = "run";
};

// ---------------------------------------------------------------------------
// In-memory form of a generated dataset directory.

struct GeneratedData {
  TriMesh mesh;
  TangentBasis basis;
  std::vector<FiberParams> truth_params;
  std::vector<Vec3> fiber_true;
  std::vector<std::vector<double>> dense_maps;  // scaled times, per source
  std::vector<SourcePoint> sources;
  std::vector<SampleRow> samples;
  double time_scale = 1.0;
  double noise_sigma_ms = 0.0;
  double t_max_raw = 0.0;  // largest dense time, in scaled units
  std::uint64_t data_seed = 0;

  // Optional line discontinuity of the truth (for region-split metrics):
  // smooth region = points with |normal . x - offset| >= min_distance.
  bool has_discontinuity = false;
  Vec3 disc_normal = Vec3::Zero();
  double disc_offset = 0.0;
  double smooth_min_distance = 0.0;

  bool planar() const {
    Vec3 lo, hi;
    mesh.bounding_box(lo, hi);
    return hi.z() - lo.z() <= 1e-9 * (1.0 + (hi - lo).norm());
  }
};

namespace detail {

// Encode a world fiber axis in the local frame; the sign is chosen so the
// implied in-plane sine stays nonnegative.
inline FiberParams params_from_direction(Vec3 fiber, double e1, double e2,
                                         const Vec3& v1, const Vec3& v2) {
  const Vec3 n = v1.cross(v2);
  fiber -= fiber.dot(n) * n;
  const double len = fiber.norm();
  if (!(len > 1e-12))
    throw std::invalid_argument("fiber rule: direction is normal to the surface");
  fiber /= len;
  if (fiber.dot(v2) < 0.0) fiber = -fiber;
  return {std::clamp(fiber.dot(v1), -1.0, 1.0), e1, e2};
}

inline bool mesh_is_planar(const TriMesh& mesh) {
  Vec3 lo, hi;
  mesh.bounding_box(lo, hi);
  return hi.z() - lo.z() <= 1e-9 * (1.0 + (hi - lo).norm());
}

}  // namespace detail

// Ground-truth fiber parameters per vertex according to cfg.fiber_rule.
inline std::vector<FiberParams> build_truth_params(const ExperimentConfig& cfg,
                                                   const TriMesh& mesh,
                                                   const TangentBasis& basis) {
  const int nv = mesh.vertex_count();
  std::vector<FiberParams> params(nv);
  if (cfg.fiber_rule == "piecewise") {
    // Two half-planes split by x + y = 0: fibers along x (lower left) and
    // along y (upper right), fast/slow squared speeds 1 and 0.5.
    if (!detail::mesh_is_planar(mesh))
      throw ConfigError("fiber rule 'piecewise' requires a planar mesh");
    for (int v = 0; v < nv; ++v) {
      const Vec3& p = mesh.vertex(v);
      const Vec3 fiber = p.x() + p.y() < 0.0 ? Vec3::UnitX() : Vec3::UnitY();
      params[v] =
          detail::params_from_direction(fiber, 1.0, 0.5, basis.v1[v], basis.v2[v]);
    }
  } else if (cfg.fiber_rule == "constant") {
    check_fiber_params(cfg.constant_fibers);
    for (int v = 0; v < nv; ++v) params[v] = cfg.constant_fibers;
  } else if (cfg.fiber_rule == "file") {
    std::ifstream in(cfg.fiber_file);
    if (!in) throw IoError("cannot open " + cfg.fiber_file);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "a,e1,e2")
      throw IoError(cfg.fiber_file + ": expected header 'a,e1,e2'");
    for (int v = 0; v < nv; ++v) {
      if (!std::getline(in, line))
        throw IoError(cfg.fiber_file + ": expected one row per vertex");
      const auto f = split(line, ',');
      if (f.size() != 3)
        throw IoError(cfg.fiber_file + ": expected 3 columns");
      params[v] = {std::stod(f[0]), std::stod(f[1]), std::stod(f[2])};
      check_fiber_params(params[v]);
    }
  } else {
    throw ConfigError("unknown fiber rule '" + cfg.fiber_rule + "'");
  }
  return params;
}

inline TangentBasis build_basis(const ExperimentConfig& cfg, const TriMesh& mesh) {
  std::string kind = cfg.basis;
  if (kind == "auto") kind = detail::mesh_is_planar(mesh) ? "planar" : "vector-heat";
  if (kind == "planar") return trivial_planar_basis(mesh);
  if (kind == "vector-heat") {
    const int src =
        cfg.basis_source >= 0 ? cfg.basis_source : default_transport_source(mesh);
    const Vec3 dir = cfg.basis_direction.norm() > 0.0
                         ? cfg.basis_direction
                         : default_transport_direction(mesh, src);
    return vector_heat_basis(mesh, src, dir, cfg.basis_t);
  }
  throw ConfigError("unknown basis '" + cfg.basis + "'");
}

// ---------------------------------------------------------------------------
// Dataset generation: simulate n_maps activation maps of the ground truth,
// sample them sparsely, optionally add measurement noise.

inline GeneratedData run_generate(const ExperimentConfig& cfg) {
  if (cfg.n_maps < 1) throw ConfigError("generate: need at least one map");
  if (cfg.samples_total < cfg.n_maps)
    throw ConfigError("generate: fewer samples than maps");
  if (!(cfg.time_scale > 0.0)) throw ConfigError("generate: bad time scale");

  TriMesh mesh = cfg.mesh_path.empty() ? build_unit_grid_mesh(cfg.grid_n)
                                       : load_mesh(cfg.mesh_path);
  TangentBasis basis = build_basis(cfg, mesh);
  std::vector<FiberParams> truth = build_truth_params(cfg, mesh, basis);
  const auto field = ConductivityTensorField::from_fiber_params(mesh, basis, truth);

  Rng master(cfg.data_seed);
  const std::uint64_t source_seed = master();
  std::vector<std::uint64_t> sample_seeds(cfg.n_maps);
  if (cfg.shared_points) {
    const std::uint64_t s = master();
    for (auto& v : sample_seeds) v = s;
  } else {
    for (auto& v : sample_seeds) v = master();
  }
  const std::uint64_t noise_seed = master();

  // Pacing sites.
  std::vector<int> source_ids;
  if (cfg.source_mode == "lhs") {
    for (const auto& s : latin_hypercube_on_mesh(mesh, cfg.n_maps, source_seed))
      source_ids.push_back(nearest_vertex(mesh, s.position));
  } else if (cfg.source_mode == "farthest") {
    Rng rng(source_seed);
    const int start = cfg.farthest_start >= 0
                          ? cfg.farthest_start
                          : static_cast<int>(uniform_index(
                                rng, static_cast<std::size_t>(mesh.vertex_count())));
    source_ids = farthest_point_sample(mesh, cfg.n_maps, start);
  } else if (cfg.source_mode == "vertices") {
    source_ids = cfg.source_vertices;
    if (static_cast<int>(source_ids.size()) != cfg.n_maps)
      throw ConfigError("generate: --sources list must match the map count");
    for (const int v : source_ids)
      if (v < 0 || v >= mesh.vertex_count())
        throw ConfigError("generate: source vertex out of range");
  } else {
    throw ConfigError("unknown source mode '" + cfg.source_mode + "'");
  }

  GeneratedData gd{std::move(mesh),
                   std::move(basis),
                   std::move(truth),
                   {},
                   {},
                   {},
                   {},
                   cfg.time_scale,
                   cfg.noise_sigma_ms,
                   0.0,
                   cfg.data_seed};
  for (int v = 0; v < gd.mesh.vertex_count(); ++v)
    gd.fiber_true.push_back(
        fiber_direction(gd.truth_params[v], gd.basis.v1[v], gd.basis.v2[v]));

  for (const int s : source_ids) {
    gd.sources.push_back({s, 0.0});
    auto map = solve_fim(gd.mesh, field, {{s, 0.0}});
    for (double& t : map.times) t *= cfg.time_scale;
    gd.t_max_raw = std::max(
        gd.t_max_raw, *std::max_element(map.times.begin(), map.times.end()));
    gd.dense_maps.push_back(std::move(map.times));
  }

  // Sparse measurements: fresh sample locations per map unless shared.
  std::string mode = cfg.sample_mode;
  if (mode == "auto") mode = gd.planar() ? "lhs" : "area";
  const int base = cfg.samples_total / cfg.n_maps;
  for (int m = 0; m < cfg.n_maps; ++m) {
    const int count = base + (m < cfg.samples_total % cfg.n_maps ? 1 : 0);
    std::vector<PointSample> pts;
    if (mode == "lhs")
      pts = latin_hypercube_on_mesh(gd.mesh, count, sample_seeds[m]);
    else if (mode == "area")
      pts = sample_surface_uniform(gd.mesh, count, sample_seeds[m]);
    else
      throw ConfigError("unknown sample mode '" + mode + "'");
    for (const auto& p : pts)
      gd.samples.push_back(
          {m, p.position, interpolate_vertex_values(gd.mesh, gd.dense_maps[m], p)});
  }
  add_noise(gd.samples, cfg.noise_sigma_ms, noise_seed);

  if (cfg.fiber_rule == "piecewise") {
    gd.has_discontinuity = true;
    gd.disc_normal = Vec3(1.0, 1.0, 0.0).normalized();
    gd.disc_offset = 0.0;
    const double h = cfg.mesh_path.empty() ? 2.0 / (cfg.grid_n - 1)
                                           : gd.mesh.mean_edge_length();
    gd.smooth_min_distance = 2.0 * h;
  }
  return gd;
}

// ---------------------------------------------------------------------------
// Dataset directory: domain.vtk (geometry, frames, truth, dense maps),
// samples.csv, truth.json.

inline void write_generated(const std::string& dir, const GeneratedData& gd) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);

  VtkPolyData vtk;
  vtk.points = gd.mesh.vertices();
  vtk.polygons = gd.mesh.triangles();
  vtk.point_vectors["basis_v1"] = gd.basis.v1;
  vtk.point_vectors["basis_v2"] = gd.basis.v2;
  vtk.point_vectors["fiber_true"] = gd.fiber_true;
  auto& a = vtk.point_scalars["a_true"];
  auto& e1 = vtk.point_scalars["e1_true"];
  auto& e2 = vtk.point_scalars["e2_true"];
  for (const auto& p : gd.truth_params) {
    a.push_back(p.a);
    e1.push_back(p.e1);
    e2.push_back(p.e2);
  }
  char name[32];
  for (std::size_t m = 0; m < gd.dense_maps.size(); ++m) {
    std::snprintf(name, sizeof(name), "map_%03zu", m);
    vtk.point_scalars[name] = gd.dense_maps[m];
  }
  save_vtk(dir + "/domain.vtk", vtk);
  save_samples_csv(dir + "/samples.csv", gd.samples);

  json truth;
  truth["format"] = "fiberfit-dataset";
  truth["version"] = 1;
  truth["time_scale"] = gd.time_scale;
  truth["noise_sigma_ms"] = gd.noise_sigma_ms;
  truth["t_max_raw"] = gd.t_max_raw;
  truth["data_seed"] = gd.data_seed;
  truth["n_maps"] = gd.dense_maps.size();
  json sources = json::array();
  for (const auto& s : gd.sources) sources.push_back({{"vertex", s.vertex},
                                                      {"time", s.time}});
  truth["sources"] = sources;
  if (gd.has_discontinuity) {
    truth["discontinuity"] = {
        {"normal", {gd.disc_normal.x(), gd.disc_normal.y(), gd.disc_normal.z()}},
        {"offset", gd.disc_offset},
        {"smooth_min_distance", gd.smooth_min_distance}};
  }
  std::ofstream out(dir + "/truth.json");
  if (!out) throw IoError("cannot write " + dir + "/truth.json");
  out << truth.dump(2) << '\n';
}

inline GeneratedData load_generated(const std::string& dir) {
  const VtkPolyData vtk = load_vtk(dir + "/domain.vtk");
  std::ifstream in(dir + "/truth.json");
  if (!in) throw IoError("cannot open " + dir + "/truth.json");
  json truth;
  try {
    in >> truth;
  } catch (const json::exception& e) {
    throw IoError(dir + "/truth.json: " + e.what());
  }
  if (truth.value("format", "") != "fiberfit-dataset")
    throw IoError(dir + "/truth.json: not a dataset description");

  TriMesh mesh = [&] {
    try {
      return vtk.to_mesh();
    } catch (const std::invalid_argument& e) {
      throw IoError(dir + "/domain.vtk: " + std::string(e.what()));
    }
  }();

  auto need_vec = [&](const std::string& name) {
    const auto it = vtk.point_vectors.find(name);
    if (it == vtk.point_vectors.end())
      throw IoError(dir + "/domain.vtk: missing VECTORS " + name);
    return it->second;
  };
  auto need_sca = [&](const std::string& name) {
    const auto it = vtk.point_scalars.find(name);
    if (it == vtk.point_scalars.end())
      throw IoError(dir + "/domain.vtk: missing SCALARS " + name);
    return it->second;
  };

  GeneratedData gd{std::move(mesh), {}, {}, {}, {}, {}, {}, 1.0, 0.0, 0.0, 0};
  gd.basis.v1 = need_vec("basis_v1");
  gd.basis.v2 = need_vec("basis_v2");
  gd.basis.n.resize(gd.basis.v1.size());
  for (std::size_t v = 0; v < gd.basis.n.size(); ++v)
    gd.basis.n[v] = gd.basis.v1[v].cross(gd.basis.v2[v]);
  gd.basis.validate();
  gd.fiber_true = need_vec("fiber_true");

  const auto a = need_sca("a_true"), e1 = need_sca("e1_true"), e2 = need_sca("e2_true");
  for (std::size_t v = 0; v < a.size(); ++v)
    gd.truth_params.push_back({a[v], e1[v], e2[v]});

  const int n_maps = truth.value("n_maps", 0);
  char name[32];
  for (int m = 0; m < n_maps; ++m) {
    std::snprintf(name, sizeof(name), "map_%03d", m);
    gd.dense_maps.push_back(need_sca(name));
  }
  for (const auto& s : truth["sources"])
    gd.sources.push_back({s["vertex"].get<int>(), s["time"].get<double>()});
  if (static_cast<int>(gd.sources.size()) != n_maps)
    throw IoError(dir + "/truth.json: source/map count mismatch");

  gd.time_scale = truth.value("time_scale", 1.0);
  gd.noise_sigma_ms = truth.value("noise_sigma_ms", 0.0);
  gd.t_max_raw = truth.value("t_max_raw", 0.0);
  gd.data_seed = truth.value("data_seed", std::uint64_t{0});
  if (truth.contains("discontinuity")) {
    const auto& d = truth["discontinuity"];
    gd.has_discontinuity = true;
    gd.disc_normal = Vec3(d["normal"][0].get<double>(), d["normal"][1].get<double>(),
                          d["normal"][2].get<double>());
    gd.disc_offset = d["offset"].get<double>();
    gd.smooth_min_distance = d["smooth_min_distance"].get<double>();
  }
  gd.samples = load_samples_csv(dir + "/samples.csv");
  return gd;
}

// ---------------------------------------------------------------------------
// Training dataset from the first n_maps maps of a generated directory.

inline Dataset build_dataset(const GeneratedData& gd, int n_maps) {
  if (n_maps < 1 || n_maps > static_cast<int>(gd.dense_maps.size()))
    throw ConfigError("train: map count out of range");
  Dataset ds;
  ds.input_dim = gd.planar() ? 2 : 3;
  Vec3 lo, hi;
  gd.mesh.bounding_box(lo, hi);
  ds.box_lo = lo.head(3);
  ds.box_hi = hi.head(3);
  ds.maps.resize(n_maps);
  for (int m = 0; m < n_maps; ++m) ds.maps[m].source = gd.sources[m];

  std::vector<Vec3> positions;
  std::vector<std::pair<int, double>> meta;
  for (const auto& row : gd.samples) {
    if (row.map_id < 0 || row.map_id >= static_cast<int>(gd.dense_maps.size()))
      throw IoError("samples.csv: map id out of range");
    if (row.map_id >= n_maps) continue;
    positions.push_back(row.position);
    meta.emplace_back(row.map_id, row.time_ms);
  }
  const auto projected = project_points(gd.mesh, positions);
  for (std::size_t i = 0; i < projected.size(); ++i)
    ds.maps[meta[i].first].samples.push_back({projected[i].sample, meta[i].second});
  for (const auto& m : ds.maps)
    if (m.samples.empty()) throw ConfigError("train: a map has no samples");

  ds.collocation = default_collocation(gd.mesh, gd.basis);
  normalize_times(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Model container (JSON).

struct ModelContainer {
  std::vector<NeuralField> phi;
  NeuralField d;
  double t_max = 1.0;
};

namespace detail {

inline json field_to_json(const NeuralField& f) {
  json j;
  j["input_dim"] = f.spec.input_dim;
  j["hidden"] = f.spec.hidden;
  json heads = json::array();
  for (const auto h : f.spec.heads) heads.push_back(head_name(h));
  j["heads"] = heads;
  j["cap"] = f.spec.cap;
  j["center"] = std::vector<double>(f.scaling.center.begin(), f.scaling.center.end());
  j["halfwidth"] =
      std::vector<double>(f.scaling.halfwidth.begin(), f.scaling.halfwidth.end());
  json weights = json::array(), biases = json::array();
  for (const auto& w : f.params.w) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
      rows.push_back(std::move(row));
    }
    weights.push_back(std::move(rows));
  }
  for (const auto& b : f.params.b)
    biases.push_back(std::vector<double>(b.begin(), b.end()));
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

inline NeuralField field_from_json(const json& j) {
  NeuralField f;
  f.spec.input_dim = j.at("input_dim").get<int>();
  f.spec.hidden = j.at("hidden").get<std::vector<int>>();
  for (const auto& h : j.at("heads"))
    f.spec.heads.push_back(head_from_name(h.get<std::string>()));
  f.spec.cap = j.at("cap").get<double>();
  f.spec.validate();
  const auto center = j.at("center").get<std::vector<double>>();
  const auto halfwidth = j.at("halfwidth").get<std::vector<double>>();
  f.scaling.center = Eigen::Map<const Eigen::VectorXd>(center.data(), center.size());
  f.scaling.halfwidth =
      Eigen::Map<const Eigen::VectorXd>(halfwidth.data(), halfwidth.size());
  f.params = MlpParams::zeros(f.spec);
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != f.params.w.size() || biases.size() != f.params.b.size())
    throw IoError("model: layer count mismatch");
  for (std::size_t k = 0; k < f.params.w.size(); ++k) {
    auto& w = f.params.w[k];
    if (static_cast<Eigen::Index>(weights[k].size()) != w.rows())
      throw IoError("model: weight shape mismatch");
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const auto row = weights[k][r].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != w.cols())
        throw IoError("model: weight shape mismatch");
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = row[c];
    }
    const auto b = biases[k].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(b.size()) != f.params.b[k].size())
      throw IoError("model: bias shape mismatch");
    for (Eigen::Index i = 0; i < f.params.b[k].size(); ++i) f.params.b[k][i] = b[i];
  }
  return f;
}

}  // namespace detail

inline void save_model(const std::string& path, const ModelContainer& model) {
  json j;
  j["format"] = "fiberfit-model";
  j["version"] = 1;
  j["t_max"] = model.t_max;
  json phis = json::array();
  for (const auto& f : model.phi) phis.push_back(detail::field_to_json(f));
  j["phi"] = std::move(phis);
  j["d"] = detail::field_to_json(model.d);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline ModelContainer load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  if (j.value("format", "") != "fiberfit-model")
    throw IoError(path + ": not a model container");
  ModelContainer model;
  try {
    model.t_max = j.at("t_max").get<double>();
    for (const auto& f : j.at("phi")) model.phi.push_back(detail::field_from_json(f));
    model.d = detail::field_from_json(j.at("d"));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Derived fields of a trained model on the dataset mesh.

inline ConductivityTensorField recovered_field(const GeneratedData& gd,
                                               const NeuralField& dnet) {
  return ConductivityTensorField::from_fiber_params(
      gd.mesh, gd.basis, eval_fiber_params(dnet, gd.mesh));
}

inline std::vector<double> dense_prediction(const GeneratedData& gd,
                                            const NeuralField& phi, double t_max) {
  std::vector<double> out(gd.mesh.vertex_count());
  MlpWorkspace ws;
  for (int v = 0; v < gd.mesh.vertex_count(); ++v) {
    phi.eval(gd.mesh.vertex(v), ws, false);
    out[v] = ws.y[0] * t_max;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation: fiber-angle statistics (overall and away from the truth's
// discontinuity), dense map RMSE of the map networks, and the generalization
// RMSE of a simulated unseen pacing site.

struct EvalRegionStats {
  std::string region;
  double mean_deg = 0.0, median_deg = 0.0, p25_deg = 0.0, p75_deg = 0.0;
};

struct EvalReport {
  std::vector<double> fiber_error_deg;  // per vertex
  std::vector<EvalRegionStats> regions;
  double rmse_ms = 0.0;         // mean over training maps
  double unseen_rmse_ms = 0.0;
  int unseen_vertex = -1;
  std::vector<FiberParams> recovered_params;
  std::vector<Vec3> recovered_fiber;
};

inline int pick_unseen_vertex(const GeneratedData& gd, int n_maps_used) {
  if (n_maps_used < static_cast<int>(gd.sources.size()))
    return gd.sources[n_maps_used].vertex;
  const auto iso = ConductivityTensorField::isotropic(gd.mesh, 1.0);
  std::vector<SourcePoint> train_sources(gd.sources.begin(),
                                         gd.sources.begin() + n_maps_used);
  for (auto& s : train_sources) s.time = 0.0;
  const auto dist = solve_fim(gd.mesh, iso, train_sources).times;
  int best = 0;
  for (int v = 1; v < gd.mesh.vertex_count(); ++v)
    if (dist[v] > dist[best]) best = v;
  return best;
}

inline EvalReport run_evaluate(const GeneratedData& gd, const ModelContainer& model,
                               int unseen_vertex = -1) {
  EvalReport rep;
  const int nv = gd.mesh.vertex_count();
  rep.recovered_params = eval_fiber_params(model.d, gd.mesh);
  for (int v = 0; v < nv; ++v)
    rep.recovered_fiber.push_back(
        fiber_direction(rep.recovered_params[v], gd.basis.v1[v], gd.basis.v2[v]));

  rep.fiber_error_deg.resize(nv);
  for (int v = 0; v < nv; ++v)
    rep.fiber_error_deg[v] = fiber_angle_error(rep.recovered_fiber[v],
                                               gd.fiber_true[v]);

  auto push_stats = [&](const std::string& region, const std::vector<double>& errs) {
    if (errs.empty()) return;
    rep.regions.push_back({region, mean_of(errs), percentile(errs, 50.0),
                           percentile(errs, 25.0), percentile(errs, 75.0)});
  };
  push_stats("all", rep.fiber_error_deg);
  if (gd.has_discontinuity) {
    std::vector<double> smooth;
    for (int v = 0; v < nv; ++v)
      if (std::abs(gd.disc_normal.dot(gd.mesh.vertex(v)) - gd.disc_offset) >=
          gd.smooth_min_distance)
        smooth.push_back(rep.fiber_error_deg[v]);
    push_stats("smooth", smooth);
  }

  const int n_maps_used = static_cast<int>(model.phi.size());
  double rmse_acc = 0.0;
  for (int m = 0; m < n_maps_used; ++m)
    rmse_acc += map_rmse(dense_prediction(gd, model.phi[m], model.t_max),
                         gd.dense_maps[m]);
  rep.rmse_ms = rmse_acc / n_maps_used;

  rep.unseen_vertex =
      unseen_vertex >= 0 ? unseen_vertex : pick_unseen_vertex(gd, n_maps_used);
  if (rep.unseen_vertex >= nv)
    throw ConfigError("evaluate: unseen vertex out of range");
  const auto truth_field =
      ConductivityTensorField::from_fiber_params(gd.mesh, gd.basis, gd.truth_params);
  auto truth_map = solve_fim(gd.mesh, truth_field, {{rep.unseen_vertex, 0.0}});
  for (double& t : truth_map.times) t *= gd.time_scale;
  const auto unseen = validate_unseen_map(gd.mesh, recovered_field(gd, model.d),
                                          {rep.unseen_vertex, 0.0}, truth_map.times);
  rep.unseen_rmse_ms = unseen.rmse;
  return rep;
}

// ---------------------------------------------------------------------------
// Classical baseline over the dense maps: area-weighted vertex gradients per
// map, then an independent tensor fit at every vertex.

struct BaselineReport {
  std::vector<FitReport> fits;
  std::vector<double> fiber_error_deg;  // only where the fit is unique
  double unique_fraction = 0.0;
  double mean_tensor_error = 0.0;  // Frobenius distance to the truth tensors
};

inline std::vector<std::vector<Vec3>> vertex_gradients(
    const TriMesh& mesh, const std::vector<std::vector<double>>& maps) {
  std::vector<std::vector<Vec3>> out(mesh.vertex_count());
  for (auto& g : out) g.reserve(maps.size());
  for (const auto& map : maps) {
    const auto tri_grads = map_gradient(mesh, map);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
      Vec3 acc = Vec3::Zero();
      double area = 0.0;
      for (const int t : mesh.triangles_of(v)) {
        acc += mesh.area(t) * tri_grads[t];
        area += mesh.area(t);
      }
      out[v].push_back(acc / area);
    }
  }
  return out;
}

inline BaselineReport run_baseline(const GeneratedData& gd, int n_maps) {
  if (n_maps < 1 || n_maps > static_cast<int>(gd.dense_maps.size()))
    throw ConfigError("baseline: map count out of range");
  const std::vector<std::vector<double>> maps(gd.dense_maps.begin(),
                                              gd.dense_maps.begin() + n_maps);
  const auto grads = vertex_gradients(gd.mesh, maps);

  BaselineReport rep;
  int unique = 0;
  for (int v = 0; v < gd.mesh.vertex_count(); ++v) {
    rep.fits.push_back(
        fit_tensor_from_gradients(grads[v], gd.basis.v1[v], gd.basis.v2[v]));
    const FitReport& fit = rep.fits.back();
    if (fit.unique) {
      ++unique;
      rep.fiber_error_deg.push_back(fiber_angle_error(
          fiber_direction(fit.params, gd.basis.v1[v], gd.basis.v2[v]),
          gd.fiber_true[v]));
    }
    // Truth tensors live in scaled-time units when time_scale != 1.
    const Mat3 truth =
        assemble_tensor(gd.truth_params[v], gd.basis.v1[v], gd.basis.v2[v]) /
        (gd.time_scale * gd.time_scale);
    rep.mean_tensor_error += (fit.tensor - truth).norm();
  }
  rep.unique_fraction =
      static_cast<double>(unique) / static_cast<double>(gd.mesh.vertex_count());
  rep.mean_tensor_error /= gd.mesh.vertex_count();
  return rep;
}

// ---------------------------------------------------------------------------
// Artifact writers shared by the CLI commands.

struct MetricsRow {
  std::string experiment;
  int maps = 0;
  double noise_sigma_ms = 0.0;
  std::uint64_t seed = 0;
  std::string region = "all";
  double fiber_mean_deg = 0.0, fiber_median_deg = 0.0;
  double fiber_p25_deg = 0.0, fiber_p75_deg = 0.0;
  double rmse_ms = 0.0, unseen_rmse_ms = 0.0;
};

inline void save_metrics_csv(const std::string& path,
                             const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "experiment,maps,noise_sigma_ms,seed,region,fiber_mean_deg,"
         "fiber_median_deg,fiber_p25_deg,fiber_p75_deg,rmse_ms,unseen_rmse_ms\n";
  for (const auto& r : rows)
    out << r.experiment << ',' << r.maps << ',' << fmt_double(r.noise_sigma_ms)
        << ',' << r.seed << ',' << r.region << ',' << fmt_double(r.fiber_mean_deg)
        << ',' << fmt_double(r.fiber_median_deg) << ',' << fmt_double(r.fiber_p25_deg)
        << ',' << fmt_double(r.fiber_p75_deg) << ',' << fmt_double(r.rmse_ms) << ','
        << fmt_double(r.unseen_rmse_ms) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline void save_history_csv(const std::string& path,
                             const std::vector<HistoryRow>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "iteration,loss_data,loss_eiko,loss_cv,loss_ang,loss_total\n";
  for (const auto& row : history)
    out << row.iteration << ',' << fmt_double(row.terms.data) << ','
        << fmt_double(row.terms.eiko) << ',' << fmt_double(row.terms.cv) << ','
        << fmt_double(row.terms.ang) << ',' << fmt_double(row.total) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<MetricsRow> metrics_from_eval(const ExperimentConfig& cfg,
                                                 const GeneratedData& gd,
                                                 const EvalReport& rep, int maps) {
  std::vector<MetricsRow> rows;
  for (const auto& region : rep.regions) {
    MetricsRow r;
    r.experiment = cfg.experiment_id;
    r.maps = maps;
    r.noise_sigma_ms = gd.noise_sigma_ms;
    r.seed = cfg.training.seed;
    r.region = region.region;
    r.fiber_mean_deg = region.mean_deg;
    r.fiber_median_deg = region.median_deg;
    r.fiber_p25_deg = region.p25_deg;
    r.fiber_p75_deg = region.p75_deg;
    r.rmse_ms = rep.rmse_ms;
    r.unseen_rmse_ms = rep.unseen_rmse_ms;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_recovered_fields(const std::string& path, const GeneratedData& gd,
                                   const ModelContainer& model,
                                   const EvalReport& rep) {
  VtkPolyData vtk;
  vtk.points = gd.mesh.vertices();
  vtk.polygons = gd.mesh.triangles();
  auto& a = vtk.point_scalars["a_rec"];
  auto& e1 = vtk.point_scalars["e1_rec"];
  auto& e2 = vtk.point_scalars["e2_rec"];
  for (const auto& p : rep.recovered_params) {
    a.push_back(p.a);
    e1.push_back(p.e1);
    e2.push_back(p.e2);
  }
  vtk.point_vectors["fiber_rec"] = rep.recovered_fiber;
  vtk.point_scalars["fiber_error_deg"] = rep.fiber_error_deg;
  char name[32];
  for (std::size_t m = 0; m < model.phi.size(); ++m) {
    std::snprintf(name, sizeof(name), "map_pred_%03zu", m);
    vtk.point_scalars[name] = dense_prediction(gd, model.phi[m], model.t_max);
  }
  save_vtk(path, vtk);
}

}  // namespace fiberfit
