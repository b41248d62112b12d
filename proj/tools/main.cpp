// Command-line driver for the joint shape-correspondence toolkit.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "shapecorr/deform_energy.hpp"
#include "shapecorr/induced.hpp"
#include "shapecorr/kdtree.hpp"
#include "shapecorr/metrics.hpp"
#include "shapecorr/pipeline.hpp"
#include "shapecorr/registration.hpp"
#include "shapecorr/rng.hpp"
#include "shapecorr/simplify.hpp"
#include "shapecorr/synth.hpp"

using namespace shapecorr;
namespace fs = std::filesystem;

namespace {

VoxelGrid grid_for(const std::vector<TriMesh>& meshes, const std::array<int, 3>& dims,
                   double margin) {
  Vec3 lo = meshes[0].bbox_min(), hi = meshes[0].bbox_max();
  for (const auto& m : meshes) {
    lo = lo.cwiseMin(m.bbox_min());
    hi = hi.cwiseMax(m.bbox_max());
  }
  double diag = (hi - lo).norm();
  return VoxelGrid::from_box(lo - Vec3::Constant(margin * diag),
                             hi + Vec3::Constant(margin * diag), dims);
}

void write_json(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

VecX parse_vector(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
  return Eigen::Map<VecX>(vals.data(), vals.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint shape correspondence toolkit"};
  app.require_subcommand(1);

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic shape collection");
  std::string synth_family = "sphere-radius", synth_out = "collection";
  int synth_count = 10;
  uint64_t synth_seed = 0;
  synth->add_option("--family", synth_family,
                    "sphere-radius | ellipsoid-axes | bent-capsule | bump-field");
  synth->add_option("--count", synth_count)->check(CLI::Range(2, 10000));
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out);
  synth->callback([&] {
    CollectionManifest m =
        synth_collection(synth_family_from(synth_family), synth_count, synth_seed, synth_out);
    std::cout << "wrote " << m.size() << " shapes to " << synth_out << "\n";
  });

  // --- energy-check ----------------------------------------------------------
  auto* energy = app.add_subcommand(
      "energy-check", "Verify deformation quadratic forms against the direct minimizers");
  std::string energy_mesh;
  double energy_alpha = kDefaultAlpha;
  int energy_trials = 10;
  uint64_t energy_seed = 0;
  std::string energy_dump;
  energy->add_option("--mesh", energy_mesh)->required();
  energy->add_option("--alpha", energy_alpha);
  energy->add_option("--trials", energy_trials);
  energy->add_option("--seed", energy_seed);
  energy->add_option("--dump-mtx", energy_dump, "Write <prefix>_{arap,acap}.mtx");
  energy->callback([&] {
    TriMesh mesh = load_mesh(energy_mesh);
    DeformQuadForm arap = build_arap(mesh);
    DeformQuadForm acap = build_acap(mesh);
    DeformQuadForm combined = build_combined(mesh, energy_alpha);
    Rng rng(energy_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < energy_trials; ++t) {
      VecX d(3 * mesh.n());
      for (int i = 0; i < d.size(); ++i) d[i] = gauss(rng);
      double oracle_arap = arap_energy_oracle(mesh, d);
      double oracle_acap = acap_energy_oracle(mesh, d);
      worst = std::max(worst, std::abs(arap.energy(d) - oracle_arap) /
                                  std::max(1.0, oracle_arap));
      worst = std::max(worst, std::abs(acap.energy(d) - oracle_acap) /
                                  std::max(1.0, oracle_acap));
    }
    VecX translation = VecX::Zero(3 * mesh.n());
    for (int i = 0; i < mesh.n(); ++i) translation.segment<3>(3 * i) = Vec3(1, -2, 0.5);
    bool ok = worst <= 1e-8 &&
              combined.energy(translation) <= 1e-10 * translation.squaredNorm();
    std::cout << "oracle agreement (worst relative): " << worst << "\n";
    std::cout << "translation null space: "
              << combined.energy(translation) / translation.squaredNorm() << "\n";
    std::cout << (ok ? "PASS" : "FAIL") << "\n";
    if (!energy_dump.empty()) {
      arap.matrix.save_matrix_market(energy_dump + "_arap.mtx");
      acap.matrix.save_matrix_market(energy_dump + "_acap.mtx");
    }
    if (!ok) throw CLI::RuntimeError(1);
  });

  // --- correspond ------------------------------------------------------------
  auto* corr = app.add_subcommand(
      "correspond", "Induced displacement between adjacent level sets of the generator");
  std::string corr_manifest, corr_out = "correspond_out", corr_direction, corr_trace = "exact";
  int corr_shape = 0, corr_toward = -1, corr_simplify = 2000;
  double corr_eps = kDefaultLevelStep, corr_mu = -1.0, corr_alpha = kDefaultAlpha;
  double corr_eps_cyc = kDefaultCycleStep, corr_margin = 0.15;
  std::array<int, 3> corr_dims = {48, 48, 48};
  bool corr_cycle = false;
  uint64_t corr_seed = 0;
  corr->add_option("--manifest", corr_manifest)->required();
  corr->add_option("--shape", corr_shape);
  corr->add_option("--toward", corr_toward, "Shape whose code sets the latent direction");
  corr->add_option("--direction", corr_direction, "Explicit latent direction (csv)");
  corr->add_option("--epsilon", corr_eps);
  corr->add_option("--mu", corr_mu, "Negative: trace-scaled default");
  corr->add_option("--alpha", corr_alpha);
  corr->add_option("--eps-cyc", corr_eps_cyc);
  corr->add_option("--trace-mode", corr_trace, "exact | hutchinson:<m>");
  corr->add_option("--grid-dims", corr_dims);
  corr->add_option("--simplify", corr_simplify);
  corr->add_flag("--cycle", corr_cycle, "Also report the 3-cycle residual");
  corr->add_option("--seed", corr_seed);
  corr->add_option("--out", corr_out);
  corr->callback([&] {
    CollectionManifest manifest = CollectionManifest::load(corr_manifest);
    auto gen = manifest.make_generator();
    std::vector<TriMesh> meshes;
    for (int i = 0; i < manifest.size(); ++i) meshes.push_back(manifest.load_shape(i));
    VoxelGrid grid = grid_for(meshes, corr_dims, corr_margin);
    const LatentCode& z = manifest.codes[corr_shape];
    VecX v;
    if (!corr_direction.empty())
      v = parse_vector(corr_direction);
    else if (corr_toward >= 0)
      v = (manifest.codes[corr_toward] - z).normalized();
    else
      throw CLI::ValidationError("correspond", "need --toward or --direction");

    TriMesh level = simplify(marching_cubes(*gen, z, grid).mesh, corr_simplify).mesh;
    DeformQuadForm form = build_combined(level, corr_alpha);
    double mu = corr_mu >= 0 ? corr_mu : default_mu(form);
    InducedSolver solver(form, build_constraints(*gen, level, z), mu);
    CorrespondenceField fieldr = solver.solve_displacement(v, corr_eps);
    auto [mode, probes] = parse_trace_mode(corr_trace);

    fs::create_directories(corr_out);
    TriMesh displaced = level.with_positions(level.stacked_positions() + fieldr.d);
    save_ply(level, (fs::path(corr_out) / "level_set.ply").string());
    save_ply(displaced, (fs::path(corr_out) / "displaced.ply").string());

    nlohmann::ordered_json diag;
    diag["shape"] = corr_shape;
    diag["epsilon"] = corr_eps;
    diag["mu"] = mu;
    diag["alpha"] = corr_alpha;
    diag["dropped_constraints"] = static_cast<int>(solver.constraints().dropped.size());
    diag["constraint_residual_inf"] = fieldr.diagnostics.constraint_residual_inf;
    diag["kkt_residual_inf"] = fieldr.diagnostics.kkt_residual_inf;
    diag["objective"] = fieldr.diagnostics.objective;
    diag["energy"] = fieldr.diagnostics.energy;
    diag["minimum_norm_fallback"] = fieldr.diagnostics.minimum_norm_fallback;
    diag["r_geo"] = solver.r_geo(mode, probes, derive_seed(corr_seed, 7));
    if (corr_cycle) {
      double rc = cycle_residual(*gen, z, 0, corr_eps_cyc, grid, corr_simplify, corr_alpha,
                                 corr_mu);
      diag["r_cyc"] = rc;
      diag["r_cyc_per_dof"] = rc / (3.0 * level.n());  // discretization-normalized option
    }
    write_json(diag, (fs::path(corr_out) / "diagnostics.json").string());
    std::cout << diag.dump(2) << "\n";
  });

  // --- interpolate -----------------------------------------------------------
  auto* interp = app.add_subcommand(
      "interpolate", "Extract level-set meshes along a latent interpolation path");
  std::string interp_manifest, interp_out = "interpolate_out";
  int interp_from = 0, interp_to = 1, interp_steps = kDefaultPathSteps,
      interp_simplify = 2000;
  std::array<int, 3> interp_dims = {48, 48, 48};
  interp->add_option("--manifest", interp_manifest)->required();
  interp->add_option("--from", interp_from);
  interp->add_option("--to", interp_to);
  interp->add_option("--steps", interp_steps);
  interp->add_option("--grid-dims", interp_dims);
  interp->add_option("--simplify", interp_simplify);
  interp->add_option("--out", interp_out);
  interp->callback([&] {
    CollectionManifest manifest = CollectionManifest::load(interp_manifest);
    auto gen = manifest.make_generator();
    std::vector<TriMesh> meshes;
    for (int i = 0; i < manifest.size(); ++i) meshes.push_back(manifest.load_shape(i));
    VoxelGrid grid = grid_for(meshes, interp_dims, 0.15);
    auto codes = latent_path(manifest.codes[interp_from], manifest.codes[interp_to],
                             interp_steps);
    codes.push_back(manifest.codes[interp_to]);
    fs::create_directories(interp_out);
    for (size_t s = 0; s < codes.size(); ++s) {
      TriMesh level = simplify(marching_cubes(*gen, codes[s], grid).mesh, interp_simplify).mesh;
      char name[64];
      std::snprintf(name, sizeof(name), "path_%03zu.ply", s);
      save_ply(level, (fs::path(interp_out) / name).string());
    }
    std::cout << "wrote " << codes.size() << " meshes to " << interp_out << "\n";
  });

  // --- register ----------------------------------------------------------------
  auto* reg = app.add_subcommand("register", "Non-rigid ARAP registration source -> target");
  std::string reg_template, reg_target, reg_out = "registered.ply", reg_report;
  RegistrationConfig reg_config;
  reg->add_option("--template", reg_template)->required();
  reg->add_option("--target", reg_target)->required();
  reg->add_option("--data-weight", reg_config.data_weight);
  reg->add_option("--max-iters", reg_config.max_outer_iterations);
  reg->add_option("--tol", reg_config.tolerance);
  reg->add_flag("--point-to-plane", reg_config.point_to_plane);
  reg->add_option("--out", reg_out);
  reg->add_option("--report", reg_report);
  reg->callback([&] {
    TriMesh source = load_mesh(reg_template);
    TriMesh target = load_mesh(reg_target);
    RegistrationResult r = register_arap(source, target, reg_config);
    save_ply(r.deformed, reg_out);
    nlohmann::ordered_json j;
    j["data_residual"] = r.data_residual;
    j["arap_energy"] = r.arap_energy;
    j["iterations"] = r.iterations;
    j["diverged"] = r.diverged;
    if (!reg_report.empty()) write_json(j, reg_report);
    std::cout << j.dump(2) << "\n";
  });

  // --- graph -------------------------------------------------------------------
  auto* graph = app.add_subcommand("graph", "Shape-graph construction and propagation");
  graph->require_subcommand(1);
  auto* gbuild = graph->add_subcommand("build", "K-NN graph over latent codes");
  std::string gb_manifest, gb_out = "graph.json";
  int gb_k = 0;
  gbuild->add_option("--manifest", gb_manifest)->required();
  gbuild->add_option("--k", gb_k, "0: min(count-1, 4)");
  gbuild->add_option("--out", gb_out);
  gbuild->callback([&] {
    CollectionManifest manifest = CollectionManifest::load(gb_manifest);
    int k = gb_k > 0 ? gb_k : std::min(manifest.size() - 1, 4);
    ShapeGraph g = build_shape_graph(manifest.codes, k, manifest.template_index);
    nlohmann::ordered_json j;
    j["template_node"] = g.template_node;
    j["k"] = g.k;
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : g.edges) {
      double latent_dist = (manifest.codes[e.a] - manifest.codes[e.b]).norm();
      j["edges"].push_back({{"a", e.a}, {"b", e.b}, {"latent_distance", latent_dist}});
    }
    write_json(j, gb_out);
    std::cout << "wrote " << g.edges.size() << " edges to " << gb_out << "\n";
  });
  auto* gprop = graph->add_subcommand(
      "propagate", "Register per-edge and compose correspondences along shortest paths");
  PipelineConfig gp_config;
  gprop->add_option("--manifest", gp_config.manifest_path)->required();
  gprop->add_option("--k", gp_config.knn);
  gprop->add_option("--out", gp_config.output_dir);
  gprop->add_option("--seed", gp_config.seed);
  gprop->add_option("--grid-dims", gp_config.grid_dims);
  gprop->add_option("--simplify", gp_config.simplify_target);
  gprop->add_option("--path-steps", gp_config.path_steps);
  gprop->callback([&] {
    gp_config.stage1 = false;
    gp_config.stage3 = false;
    gp_config.baseline = false;
    gp_config.force_graph = true;
    nlohmann::ordered_json report = run_pipeline(gp_config);
    std::cout << report["stage2"].dump(2) << "\n";
  });

  // --- propagate (top-level alias of `graph propagate`) -----------------------
  auto* prop = app.add_subcommand(
      "propagate", "Graph-routed correspondence propagation (alias of 'graph propagate')");
  PipelineConfig pp_config;
  prop->add_option("--manifest", pp_config.manifest_path)->required();
  prop->add_option("--k", pp_config.knn);
  prop->add_option("--out", pp_config.output_dir);
  prop->add_option("--seed", pp_config.seed);
  prop->add_option("--grid-dims", pp_config.grid_dims);
  prop->add_option("--simplify", pp_config.simplify_target);
  prop->add_option("--path-steps", pp_config.path_steps);
  prop->callback([&] {
    pp_config.stage1 = false;
    pp_config.stage3 = false;
    pp_config.baseline = false;
    pp_config.force_graph = true;
    nlohmann::ordered_json report = run_pipeline(pp_config);
    std::cout << report["stage2"].dump(2) << "\n";
  });

  // --- refine ----------------------------------------------------------------
  auto* ref = app.add_subcommand("refine", "Refine a discrete generator under Chamfer + ACAP");
  std::string ref_manifest, ref_templates, ref_out = "refine_out";
  RefineOptions ref_opt;
  int ref_knn = 0;
  ref->add_option("--manifest", ref_manifest)->required();
  ref->add_option("--templates", ref_templates, "Directory of deformed_XXX.ply")->required();
  ref->add_option("--lambda-d", ref_opt.lambda_d);
  ref->add_option("--steps", ref_opt.steps);
  ref->add_option("--step-size", ref_opt.step_size, "<= 0: auto");
  ref->add_option("--rebuild-every", ref_opt.rebuild_every);
  ref->add_option("--k", ref_knn);
  ref->add_option("--out", ref_out);
  ref->callback([&] {
    CollectionManifest manifest = CollectionManifest::load(ref_manifest);
    std::vector<TriMesh> templates;
    std::vector<std::vector<Vec3>> targets;
    for (int i = 0; i < manifest.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "deformed_%03d.ply", i);
      templates.push_back(load_mesh((fs::path(ref_templates) / name).string()));
      targets.push_back(manifest.load_shape(i).vertices());
    }
    int k = ref_knn > 0 ? ref_knn : std::min(manifest.size() - 1, 4);
    ShapeGraph graph = build_shape_graph(manifest.codes, k, manifest.template_index);
    DiscreteGenerator gen = init_generator(templates, manifest.codes, graph);
    RefineResult r = refine(gen, targets, ref_opt);
    fs::create_directories(ref_out);
    for (int i = 0; i < manifest.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "refined_%03d.ply", i);
      save_ply(r.generator.mesh(i), (fs::path(ref_out) / name).string());
    }
    save_loss_trace_csv(r.trace, (fs::path(ref_out) / "loss_trace.csv").string());
    std::cout << "final total loss: " << (r.trace.empty() ? 0.0 : r.trace.back().total)
              << "\n";
  });

  // --- evaluate ----------------------------------------------------------------
  auto* eval = app.add_subcommand("evaluate", "Geodesic errors of predicted correspondences");
  std::string eval_manifest, eval_pred, eval_out = "metrics.json", eval_errors;
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--pred", eval_pred, "Directory of pred_XXX.corr")->required();
  eval->add_option("--out", eval_out);
  eval->add_option("--export-errors", eval_errors, "Directory for color-coded PLYs");
  eval->callback([&] {
    CollectionManifest manifest = CollectionManifest::load(eval_manifest);
    if (!manifest.has_gt())
      throw CLI::ValidationError("evaluate", "manifest has no ground truth");
    std::vector<CorrPairs> preds, gts;
    std::vector<TriMesh> targets;
    std::vector<int> shape_of_pair;
    for (int i = 0; i < manifest.size(); ++i) {
      if (i == manifest.template_index) continue;
      char name[64];
      std::snprintf(name, sizeof(name), "pred_%03d.corr", i);
      preds.push_back(load_correspondences((fs::path(eval_pred) / name).string()));
      gts.push_back(manifest.load_gt(i));
      targets.push_back(manifest.load_shape(i));
      shape_of_pair.push_back(i);
    }
    CorrespondenceMetrics m = eval_correspondences(preds, gts, targets);
    nlohmann::ordered_json j;
    j["mean_geodesic_error"] = m.mean_geodesic_error;
    j["median_geodesic_error"] = m.median_geodesic_error;
    j["mean_scaled"] = m.mean_geodesic_error * manifest.unit_scale;
    j["median_scaled"] = m.median_geodesic_error * manifest.unit_scale;
    write_json(j, eval_out);
    if (!eval_errors.empty()) {
      fs::create_directories(eval_errors);
      for (size_t p = 0; p < targets.size(); ++p) {
        char name[64];
        std::snprintf(name, sizeof(name), "error_%03d.ply", shape_of_pair[p]);
        // Color the template carried onto the target via the prediction.
        export_error_field(m.per_vertex_errors[p], targets[p],
                           (fs::path(eval_errors) / name).string());
      }
    }
    std::cout << j.dump(2) << "\n";
  });

  // --- pipeline ----------------------------------------------------------------
  auto* pipe = app.add_subcommand("pipeline", "Run the staged pipeline end to end");
  std::string pipe_config_path;
  PipelineConfig pc;
  uint64_t pipe_seed = 0;
  pipe->add_option("--config", pipe_config_path, "JSON config; flags override");
  pipe->add_option("--seed", pipe_seed, "Master seed")->required();
  auto* opt_manifest = pipe->add_option("--manifest", pc.manifest_path);
  auto* opt_out = pipe->add_option("--out", pc.output_dir);
  auto* opt_eps = pipe->add_option("--epsilon", pc.epsilon);
  auto* opt_alpha = pipe->add_option("--alpha", pc.alpha);
  auto* opt_lgeo = pipe->add_option("--lambda-geo", pc.lambda_geo);
  auto* opt_lcyc = pipe->add_option("--lambda-cyc", pc.lambda_cyc);
  auto* opt_T = pipe->add_option("--path-steps", pc.path_steps);
  auto* opt_knn = pipe->add_option("--knn", pc.knn);
  auto* opt_mu = pipe->add_option("--mu", pc.mu);
  auto* opt_ecyc = pipe->add_option("--eps-cyc", pc.eps_cyc);
  auto* opt_dims = pipe->add_option("--grid-dims", pc.grid_dims);
  auto* opt_simp = pipe->add_option("--simplify-target", pc.simplify_target);
  auto* opt_ld = pipe->add_option("--lambda-d", pc.lambda_d);
  auto* opt_rsteps = pipe->add_option("--refine-steps", pc.refine_steps);
  auto* opt_rstep = pipe->add_option("--refine-step-size", pc.refine_step_size);
  auto* opt_rebuild = pipe->add_option("--rebuild-every", pc.rebuild_every);
  auto* opt_s1 = pipe->add_option("--stage1-samples", pc.stage1_samples);
  auto* opt_trace = pipe->add_option("--trace-mode", pc.trace_mode);
  auto* opt_fallback = pipe->add_option("--fallback-threshold", pc.fallback_threshold);
  auto* opt_force = pipe->add_flag("--force-graph", pc.force_graph);
  auto* opt_nostage1 = pipe->add_flag("--skip-stage1");
  auto* opt_nostage2 = pipe->add_flag("--skip-stage2");
  auto* opt_nostage3 = pipe->add_flag("--skip-stage3");
  auto* opt_noeval = pipe->add_flag("--skip-eval");
  auto* opt_nobase = pipe->add_flag("--skip-baseline");
  pipe->callback([&] {
    PipelineConfig config;
    if (!pipe_config_path.empty()) {
      std::ifstream in(pipe_config_path);
      if (!in) throw CLI::ValidationError("pipeline", "cannot open " + pipe_config_path);
      nlohmann::json j;
      in >> j;
      config = PipelineConfig::from_json(j);
    }
    config.seed = pipe_seed;
    if (*opt_manifest) config.manifest_path = pc.manifest_path;
    if (*opt_out) config.output_dir = pc.output_dir;
    if (*opt_eps) config.epsilon = pc.epsilon;
    if (*opt_alpha) config.alpha = pc.alpha;
    if (*opt_lgeo) config.lambda_geo = pc.lambda_geo;
    if (*opt_lcyc) config.lambda_cyc = pc.lambda_cyc;
    if (*opt_T) config.path_steps = pc.path_steps;
    if (*opt_knn) config.knn = pc.knn;
    if (*opt_mu) config.mu = pc.mu;
    if (*opt_ecyc) config.eps_cyc = pc.eps_cyc;
    if (*opt_dims) config.grid_dims = pc.grid_dims;
    if (*opt_simp) config.simplify_target = pc.simplify_target;
    if (*opt_ld) config.lambda_d = pc.lambda_d;
    if (*opt_rsteps) config.refine_steps = pc.refine_steps;
    if (*opt_rstep) config.refine_step_size = pc.refine_step_size;
    if (*opt_rebuild) config.rebuild_every = pc.rebuild_every;
    if (*opt_s1) config.stage1_samples = pc.stage1_samples;
    if (*opt_trace) config.trace_mode = pc.trace_mode;
    if (*opt_fallback) config.fallback_threshold = pc.fallback_threshold;
    if (*opt_force) config.force_graph = true;
    if (*opt_nostage1) config.stage1 = false;
    if (*opt_nostage2) config.stage2 = false;
    if (*opt_nostage3) config.stage3 = false;
    if (*opt_noeval) config.evaluate = false;
    if (*opt_nobase) config.baseline = false;

    nlohmann::ordered_json report = run_pipeline(config);
    if (report.contains("metrics")) std::cout << report["metrics"].dump(2) << "\n";
    std::cout << "report: " << (fs::path(config.output_dir) / "report.json").string() << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}
