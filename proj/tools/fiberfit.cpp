#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "fiberfit/fiberfit.hpp"

namespace fs = std::filesystem;
using namespace fiberfit;

namespace {

struct CliState {
  ExperimentConfig cfg;
  std::string preset;
  std::vector<double> basis_direction;
  std::vector<int> phi_hidden, d_hidden;
  int grid_out_n = 35;
  std::string grid_out_path;
  // Sweep axes.
  std::vector<double> alpha_e_list = {1e-5};
  std::vector<int> maps_list = {1, 3, 5};
  std::vector<int> seed_list = {0, 1, 2, 3, 4};
};

void write_resolved_config(CLI::App& app, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
  std::ofstream out(dir + "/config.resolved.toml");
  if (!out) throw IoError("cannot write " + dir + "/config.resolved.toml");
  out << app.config_to_str(true, false);
}

void add_domain_options(CLI::App* sub, CliState& st) {
  sub->add_option("--grid-n", st.cfg.grid_n, "Grid resolution (n x n vertices)")
      ->check(CLI::Range(2, 100000));
  sub->add_option("--mesh", st.cfg.mesh_path, "Surface mesh (.obj or .vtk)")
      ->excludes("--grid-n");
  sub->add_option("--basis", st.cfg.basis, "Tangent frame: auto|planar|vector-heat");
  sub->add_option("--basis-source", st.cfg.basis_source,
                  "Transport seed vertex (-1: auto)");
  sub->add_option("--basis-direction", st.basis_direction,
                  "Transport seed vector (x y z)")
      ->expected(3);
  sub->add_option("--basis-t", st.cfg.basis_t,
                  "Diffusion time (<=0: squared mean edge length)");
}

void add_generate_options(CLI::App* sub, CliState& st) {
  add_domain_options(sub, st);
  sub->add_option("--fibers", st.cfg.fiber_rule,
                  "Truth fibers: piecewise|constant|file");
  sub->add_option("--fiber-a", st.cfg.constant_fibers.a,
                  "Constant rule: cos of fiber angle");
  sub->add_option("--fiber-e1", st.cfg.constant_fibers.e1,
                  "Constant rule: squared speed along the fiber");
  sub->add_option("--fiber-e2", st.cfg.constant_fibers.e2,
                  "Constant rule: squared speed across the fiber");
  sub->add_option("--fiber-file", st.cfg.fiber_file,
                  "Per-vertex a,e1,e2 CSV (rule 'file')");
  sub->add_option("--source-mode", st.cfg.source_mode,
                  "Pacing sites: lhs|farthest|vertices");
  sub->add_option("--maps", st.cfg.n_maps, "Number of activation maps")
      ->check(CLI::PositiveNumber);
  sub->add_option("--sources", st.cfg.source_vertices,
                  "Explicit source vertices (mode 'vertices')");
  sub->add_option("--farthest-start", st.cfg.farthest_start,
                  "First pacing site for mode 'farthest' (-1: seeded random)");
  sub->add_option("--samples", st.cfg.samples_total,
                  "Total sample count across maps")
      ->check(CLI::PositiveNumber);
  sub->add_option("--sample-mode", st.cfg.sample_mode,
                  "Sample locations: auto|lhs|area");
  sub->add_flag("--shared-points", st.cfg.shared_points,
                "Reuse the same locations for every map");
  sub->add_option("--noise", st.cfg.noise_sigma_ms,
                  "Measurement noise sigma (time units)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--time-scale", st.cfg.time_scale,
                  "Multiplies simulated times (e.g. into ms)");
  sub->add_option("--data-seed", st.cfg.data_seed, "Dataset seed");
}

void add_train_options(CLI::App* sub, CliState& st) {
  sub->add_option("--iterations", st.cfg.training.iterations, "Adam iterations")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--batch", st.cfg.training.batch, "Mini-batch size per term")
      ->check(CLI::PositiveNumber);
  sub->add_option("--lr", st.cfg.training.learning_rate, "Adam learning rate");
  sub->add_option("--alpha-m", st.cfg.training.alpha_m, "Eikonal weight");
  sub->add_option("--alpha-e", st.cfg.training.alpha_e, "Speed smoothness weight");
  sub->add_option("--alpha-a", st.cfg.training.alpha_a, "Angle smoothness weight");
  sub->add_option("--delta-e", st.cfg.training.delta_e, "Huber width (speeds)");
  sub->add_option("--delta-a", st.cfg.training.delta_a, "Huber width (angle)");
  sub->add_option("--cap", st.cfg.training.cap, "Squared-speed ceiling");
  sub->add_option("--phi-hidden", st.phi_hidden,
                  "Hidden widths of the map networks");
  sub->add_option("--d-hidden", st.d_hidden,
                  "Hidden widths of the conductivity network");
  sub->add_option("--seed", st.cfg.training.seed, "Training seed");
  sub->add_option("--history-every", st.cfg.training.history_every,
                  "Loss recording stride");
  sub->add_option("--preset", st.preset, "Hyperparameter preset: 2d|3d");
}

// Preset values fill in whatever the user did not set explicitly.
void apply_preset(CLI::App* sub, CliState& st) {
  if (st.preset.empty()) return;
  auto unset = [&](const std::string& name) {
    const CLI::Option* o = sub->get_option_no_throw(name);
    return o != nullptr && o->count() == 0;
  };
  if (st.preset == "2d") {
    return;  // the built-in defaults are the planar preset
  }
  if (st.preset == "3d") {
    if (unset("--samples")) st.cfg.samples_total = 870;
    if (unset("--source-mode")) st.cfg.source_mode = "farthest";
    if (unset("--sample-mode")) st.cfg.sample_mode = "area";
    if (unset("--fibers")) st.cfg.fiber_rule = "constant";
    if (unset("--fiber-e1")) st.cfg.constant_fibers.e1 = 0.36;
    if (unset("--fiber-e2")) st.cfg.constant_fibers.e2 = 0.16;
    if (unset("--iterations")) st.cfg.training.iterations = 30000;
    if (unset("--alpha-m")) st.cfg.training.alpha_m = 1e-4;
    if (unset("--phi-hidden")) st.cfg.training.phi_hidden = {20, 20, 20, 20, 20, 20, 20};
    if (unset("--d-hidden")) st.cfg.training.d_hidden = {20, 20, 20, 20, 20};
    return;
  }
  throw ConfigError("unknown preset '" + st.preset + "'");
}

int cmd_mesh_gen(CLI::App& app, CliState& st) {
  (void)app;
  const TriMesh mesh = build_unit_grid_mesh(st.grid_out_n);
  save_mesh(st.grid_out_path, mesh);
  std::printf("wrote %s: %d vertices, %d triangles\n", st.grid_out_path.c_str(),
              mesh.vertex_count(), mesh.triangle_count());
  return 0;
}

int cmd_generate(CLI::App& app, CliState& st) {
  const GeneratedData gd = run_generate(st.cfg);
  write_generated(st.cfg.out_dir, gd);
  write_resolved_config(app, st.cfg.out_dir);
  std::printf("generated %zu maps on %d vertices -> %s (t_max %.6g)\n",
              gd.dense_maps.size(), gd.mesh.vertex_count(), st.cfg.out_dir.c_str(),
              gd.t_max_raw);
  return 0;
}

int cmd_train(CLI::App* sub, CLI::App& app, CliState& st) {
  apply_preset(sub, st);
  if (!st.phi_hidden.empty()) st.cfg.training.phi_hidden = st.phi_hidden;
  if (!st.d_hidden.empty()) st.cfg.training.d_hidden = st.d_hidden;

  const GeneratedData gd = load_generated(st.cfg.data_dir);
  const int maps = st.cfg.train_maps > 0 ? st.cfg.train_maps
                                         : static_cast<int>(gd.dense_maps.size());
  const Dataset ds = build_dataset(gd, maps);
  const TrainResult result = train(ds, st.cfg.training);

  std::error_code ec;
  fs::create_directories(st.cfg.out_dir, ec);
  if (ec) throw IoError("cannot create directory " + st.cfg.out_dir);
  ModelContainer model{result.phi, result.d, ds.t_max};
  save_model(st.cfg.out_dir + "/model.json", model);
  save_history_csv(st.cfg.out_dir + "/history.csv", result.history);
  write_resolved_config(app, st.cfg.out_dir);

  const HistoryRow& last = result.history.back();
  std::printf("trained %d maps, %d iterations; loss %.6g -> %.6g\n", maps,
              result.iterations_run, result.history.front().total, last.total);
  if (result.diverged) {
    std::fprintf(stderr, "training diverged at iteration %d; model holds the last "
                         "finite state\n",
                 result.iterations_run);
    return 3;
  }
  return 0;
}

int cmd_evaluate(CLI::App& app, CliState& st) {
  const GeneratedData gd = load_generated(st.cfg.data_dir);
  const ModelContainer model = load_model(st.cfg.model_path);
  const EvalReport rep = run_evaluate(gd, model, st.cfg.unseen_vertex);

  std::error_code ec;
  fs::create_directories(st.cfg.out_dir, ec);
  if (ec) throw IoError("cannot create directory " + st.cfg.out_dir);
  save_metrics_csv(st.cfg.out_dir + "/metrics.csv",
                   metrics_from_eval(st.cfg, gd, rep,
                                     static_cast<int>(model.phi.size())));
  write_recovered_fields(st.cfg.out_dir + "/fields.vtk", gd, model, rep);
  write_resolved_config(app, st.cfg.out_dir);

  for (const auto& region : rep.regions)
    std::printf("fiber error (%s): mean %.3f deg, median %.3f deg\n",
                region.region.c_str(), region.mean_deg, region.median_deg);
  std::printf("map rmse %.6g, unseen-map rmse %.6g (vertex %d)\n", rep.rmse_ms,
              rep.unseen_rmse_ms, rep.unseen_vertex);
  return 0;
}

int cmd_baseline(CLI::App& app, CliState& st) {
  const GeneratedData gd = load_generated(st.cfg.data_dir);
  const int maps = st.cfg.train_maps > 0 ? st.cfg.train_maps
                                         : static_cast<int>(gd.dense_maps.size());
  const BaselineReport rep = run_baseline(gd, maps);

  std::error_code ec;
  fs::create_directories(st.cfg.out_dir, ec);
  if (ec) throw IoError("cannot create directory " + st.cfg.out_dir);

  VtkPolyData vtk;
  vtk.points = gd.mesh.vertices();
  vtk.polygons = gd.mesh.triangles();
  auto& a = vtk.point_scalars["a_fit"];
  auto& e1 = vtk.point_scalars["e1_fit"];
  auto& e2 = vtk.point_scalars["e2_fit"];
  auto& res = vtk.point_scalars["residual"];
  auto& unique = vtk.point_scalars["unique"];
  auto& fiber = vtk.point_vectors["fiber_fit"];
  for (int v = 0; v < gd.mesh.vertex_count(); ++v) {
    const FitReport& fit = rep.fits[v];
    a.push_back(fit.params.a);
    e1.push_back(fit.params.e1);
    e2.push_back(fit.params.e2);
    res.push_back(fit.residual);
    unique.push_back(fit.unique ? 1.0 : 0.0);
    fiber.push_back(fit.used > 0
                        ? fiber_direction(fit.params, gd.basis.v1[v], gd.basis.v2[v])
                        : Vec3::Zero());
  }
  save_vtk(st.cfg.out_dir + "/baseline_fields.vtk", vtk);

  MetricsRow row;
  row.experiment = st.cfg.experiment_id + "-baseline";
  row.maps = maps;
  row.noise_sigma_ms = gd.noise_sigma_ms;
  row.seed = gd.data_seed;
  row.region = "unique";
  if (!rep.fiber_error_deg.empty()) {
    row.fiber_mean_deg = mean_of(rep.fiber_error_deg);
    row.fiber_median_deg = percentile(rep.fiber_error_deg, 50.0);
    row.fiber_p25_deg = percentile(rep.fiber_error_deg, 25.0);
    row.fiber_p75_deg = percentile(rep.fiber_error_deg, 75.0);
  }
  row.rmse_ms = std::numeric_limits<double>::quiet_NaN();
  row.unseen_rmse_ms = std::numeric_limits<double>::quiet_NaN();
  save_metrics_csv(st.cfg.out_dir + "/metrics.csv", {row});
  write_resolved_config(app, st.cfg.out_dir);

  std::printf("baseline on %d maps: unique fits %.1f%%, mean tensor error %.6g\n",
              maps, 100.0 * rep.unique_fraction, rep.mean_tensor_error);
  return 0;
}

int cmd_sweep(CLI::App* sub, CLI::App& app, CliState& st) {
  apply_preset(sub, st);
  if (!st.phi_hidden.empty()) st.cfg.training.phi_hidden = st.phi_hidden;
  if (!st.d_hidden.empty()) st.cfg.training.d_hidden = st.d_hidden;

  for (const int maps : st.maps_list)
    if (maps < 1 || maps > st.cfg.n_maps)
      throw ConfigError("sweep: --maps-list entries must lie in [1, --maps]");

  std::vector<MetricsRow> all_rows;
  char label[96];
  for (const int seed : st.seed_list) {
    ExperimentConfig gen_cfg = st.cfg;
    gen_cfg.data_seed = st.cfg.data_seed + static_cast<std::uint64_t>(seed);
    const GeneratedData gd = run_generate(gen_cfg);
    const std::string data_dir =
        st.cfg.out_dir + "/data_s" + std::to_string(seed);
    write_generated(data_dir, gd);

    for (const int maps : st.maps_list) {
      for (const double alpha_e : st.alpha_e_list) {
        ExperimentConfig run_cfg = gen_cfg;
        run_cfg.training.alpha_e = alpha_e;
        run_cfg.training.seed = static_cast<std::uint64_t>(seed);
        std::snprintf(label, sizeof(label), "m%d_ae%g_s%d", maps, alpha_e, seed);
        run_cfg.experiment_id = st.cfg.experiment_id + "-" + label;

        const Dataset ds = build_dataset(gd, maps);
        const TrainResult result = train(ds, run_cfg.training);
        const std::string run_dir = st.cfg.out_dir + "/" + label;
        std::error_code ec;
        fs::create_directories(run_dir, ec);
        if (ec) throw IoError("cannot create directory " + run_dir);
        ModelContainer model{result.phi, result.d, ds.t_max};
        save_model(run_dir + "/model.json", model);
        save_history_csv(run_dir + "/history.csv", result.history);

        const EvalReport rep = run_evaluate(gd, model, st.cfg.unseen_vertex);
        write_recovered_fields(run_dir + "/fields.vtk", gd, model, rep);
        const auto rows = metrics_from_eval(run_cfg, gd, rep, maps);
        save_metrics_csv(run_dir + "/metrics.csv", rows);
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());
        std::printf("%s: fiber mean %.3f deg, unseen rmse %.6g%s\n", label,
                    rep.regions.front().mean_deg, rep.unseen_rmse_ms,
                    result.diverged ? " (diverged)" : "");
      }
    }
  }
  save_metrics_csv(st.cfg.out_dir + "/metrics.csv", all_rows);
  write_resolved_config(app, st.cfg.out_dir);
  std::printf("sweep complete: %zu metric rows -> %s/metrics.csv\n",
              all_rows.size(), st.cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conduction-velocity tensor and fiber recovery from sparse "
               "activation maps"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML file");
  app.allow_config_extras(false);

  CliState st;

  CLI::App* mesh_gen =
      app.add_subcommand("mesh-gen", "Write a unit-square grid mesh");
  mesh_gen->add_option("--grid-n", st.grid_out_n, "Grid resolution")
      ->check(CLI::Range(2, 100000));
  mesh_gen->add_option("--out", st.grid_out_path, "Output mesh (.obj or .vtk)")
      ->required();

  CLI::App* generate = app.add_subcommand(
      "generate", "Simulate ground-truth activation maps and sample them");
  add_generate_options(generate, st);
  generate->add_option("--out", st.cfg.out_dir, "Dataset directory")->required();

  CLI::App* train_cmd =
      app.add_subcommand("train", "Fit map and conductivity networks");
  train_cmd->add_option("--data", st.cfg.data_dir, "Dataset directory")->required();
  train_cmd->add_option("--out", st.cfg.out_dir, "Run directory")->required();
  train_cmd->add_option("--maps", st.cfg.train_maps,
                        "Training maps (first M of the dataset; -1: all)");
  add_train_options(train_cmd, st);

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Score a trained model against the truth");
  evaluate->add_option("--data", st.cfg.data_dir, "Dataset directory")->required();
  evaluate->add_option("--model", st.cfg.model_path, "model.json path")->required();
  evaluate->add_option("--out", st.cfg.out_dir, "Output directory")->required();
  evaluate->add_option("--unseen-vertex", st.cfg.unseen_vertex,
                       "Held-out pacing site (-1: farthest from training sites)");
  evaluate->add_option("--id", st.cfg.experiment_id, "Experiment label");

  CLI::App* baseline = app.add_subcommand(
      "baseline", "Per-vertex tensor fit from dense map gradients");
  baseline->add_option("--data", st.cfg.data_dir, "Dataset directory")->required();
  baseline->add_option("--out", st.cfg.out_dir, "Output directory")->required();
  baseline->add_option("--maps", st.cfg.train_maps, "Maps to use (-1: all)");
  baseline->add_option("--id", st.cfg.experiment_id, "Experiment label");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Generate/train/evaluate across seeds, map counts and alpha-e");
  add_generate_options(sweep, st);
  add_train_options(sweep, st);
  sweep->add_option("--out", st.cfg.out_dir, "Sweep directory")->required();
  sweep->add_option("--alpha-e-list", st.alpha_e_list, "Speed smoothness weights");
  sweep->add_option("--maps-list", st.maps_list, "Map counts");
  sweep->add_option("--seeds", st.seed_list, "Seeds");
  sweep->add_option("--unseen-vertex", st.cfg.unseen_vertex,
                    "Held-out pacing site (-1: auto)");
  sweep->add_option("--id", st.cfg.experiment_id, "Experiment label");

  try {
    app.parse(argc, argv);
    if (mesh_gen->parsed()) return cmd_mesh_gen(app, st);
    if (generate->parsed()) return cmd_generate(app, st);
    if (train_cmd->parsed()) return cmd_train(train_cmd, app, st);
    if (evaluate->parsed()) return cmd_evaluate(app, st);
    if (baseline->parsed()) return cmd_baseline(app, st);
    if (sweep->parsed()) return cmd_sweep(sweep, app, st);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
