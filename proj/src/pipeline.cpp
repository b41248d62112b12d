#include "shapecorr/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "shapecorr/discrete_generator.hpp"
#include "shapecorr/kdtree.hpp"
#include "shapecorr/metrics.hpp"
#include "shapecorr/registration.hpp"
#include "shapecorr/rng.hpp"
#include "shapecorr/simplify.hpp"

namespace fs = std::filesystem;

namespace shapecorr {

namespace {

template <typename T>
void maybe_set(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  maybe_set(j, "manifest", c.manifest_path);
  maybe_set(j, "output_dir", c.output_dir);
  maybe_set(j, "seed", c.seed);
  maybe_set(j, "stage1", c.stage1);
  maybe_set(j, "stage2", c.stage2);
  maybe_set(j, "stage3", c.stage3);
  maybe_set(j, "evaluate", c.evaluate);
  maybe_set(j, "baseline", c.baseline);
  maybe_set(j, "epsilon", c.epsilon);
  maybe_set(j, "alpha", c.alpha);
  maybe_set(j, "lambda_geo", c.lambda_geo);
  maybe_set(j, "lambda_cyc", c.lambda_cyc);
  maybe_set(j, "path_steps", c.path_steps);
  maybe_set(j, "knn", c.knn);
  maybe_set(j, "mu", c.mu);
  maybe_set(j, "eps_cyc", c.eps_cyc);
  if (j.contains("grid_dims")) {
    auto dims = j.at("grid_dims");
    for (int a = 0; a < 3; ++a) c.grid_dims[a] = dims.at(a).get<int>();
  }
  maybe_set(j, "grid_margin", c.grid_margin);
  maybe_set(j, "simplify_target", c.simplify_target);
  maybe_set(j, "lambda_d", c.lambda_d);
  maybe_set(j, "refine_steps", c.refine_steps);
  maybe_set(j, "refine_step_size", c.refine_step_size);
  maybe_set(j, "rebuild_every", c.rebuild_every);
  maybe_set(j, "stage1_samples", c.stage1_samples);
  maybe_set(j, "trace_mode", c.trace_mode);
  maybe_set(j, "fallback_threshold", c.fallback_threshold);
  maybe_set(j, "force_graph", c.force_graph);
  maybe_set(j, "data_weight", c.data_weight);
  maybe_set(j, "max_outer_iterations", c.max_outer_iterations);
  maybe_set(j, "registration_tolerance", c.registration_tolerance);
  maybe_set(j, "mlp_fit_iterations", c.mlp_fit_iterations);
  return c;
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["manifest"] = manifest_path;
  j["output_dir"] = output_dir;
  j["seed"] = seed;
  j["stage1"] = stage1;
  j["stage2"] = stage2;
  j["stage3"] = stage3;
  j["evaluate"] = evaluate;
  j["baseline"] = baseline;
  j["epsilon"] = epsilon;
  j["alpha"] = alpha;
  j["lambda_geo"] = lambda_geo;
  j["lambda_cyc"] = lambda_cyc;
  j["path_steps"] = path_steps;
  j["knn"] = knn;
  j["mu"] = mu;
  j["eps_cyc"] = eps_cyc;
  j["grid_dims"] = {grid_dims[0], grid_dims[1], grid_dims[2]};
  j["grid_margin"] = grid_margin;
  j["simplify_target"] = simplify_target;
  j["lambda_d"] = lambda_d;
  j["refine_steps"] = refine_steps;
  j["refine_step_size"] = refine_step_size;
  j["rebuild_every"] = rebuild_every;
  j["stage1_samples"] = stage1_samples;
  j["trace_mode"] = trace_mode;
  j["fallback_threshold"] = fallback_threshold;
  j["force_graph"] = force_graph;
  j["data_weight"] = data_weight;
  j["max_outer_iterations"] = max_outer_iterations;
  j["registration_tolerance"] = registration_tolerance;
  j["mlp_fit_iterations"] = mlp_fit_iterations;
  return j;
}

std::pair<TraceMode, int> parse_trace_mode(const std::string& mode) {
  if (mode == "exact") return {TraceMode::Exact, 0};
  if (mode.rfind("hutchinson:", 0) == 0) {
    int m = std::stoi(mode.substr(11));
    if (m <= 0) throw std::invalid_argument("trace mode: probe count must be > 0");
    return {TraceMode::Hutchinson, m};
  }
  throw std::invalid_argument("trace mode must be 'exact' or 'hutchinson:<m>'");
}

namespace {

// Coarse signed-distance fit when the manifest carries no generator spec:
// on-surface samples at zero plus samples offset along vertex normals.
MlpGenerator fit_generator_to_collection(const CollectionManifest& manifest,
                                         const std::vector<TriMesh>& meshes, int iterations,
                                         uint64_t seed) {
  std::vector<MlpFitSample> samples;
  Rng rng(seed);
  std::uniform_int_distribution<int> pick_vertex(0, 1 << 30);
  for (int s = 0; s < manifest.size(); ++s) {
    const TriMesh& mesh = meshes[s];
    std::vector<Vec3> normals(mesh.n(), Vec3::Zero());
    for (int f = 0; f < mesh.face_count(); ++f) {
      Vec3 nrm = mesh.face_normal(f);
      for (int k = 0; k < 3; ++k) normals[mesh.faces()[f][k]] += nrm;
    }
    double delta = 0.02 * mesh.bbox_diag();
    int stride = std::max(1, mesh.n() / 400);
    for (int v = pick_vertex(rng) % stride; v < mesh.n(); v += stride) {
      Vec3 nrm = normals[v].norm() > 1e-12 ? Vec3(normals[v].normalized()) : Vec3(0, 0, 1);
      samples.push_back({mesh.vertex(v), manifest.codes[s], 0.0});
      samples.push_back({mesh.vertex(v) + delta * nrm, manifest.codes[s], delta});
      samples.push_back({mesh.vertex(v) - delta * nrm, manifest.codes[s], -delta});
    }
  }
  MlpGenerator gen =
      make_random_mlp(static_cast<int>(manifest.codes[0].size()), {64, 64, 64}, seed ^ 0x5f5f);
  fit_mlp(gen, samples, iterations, 1e-2, derive_seed(seed, 0xF17));
  return gen;
}

CorrPairs snap_to_vertices(const std::vector<Vec3>& positions, const KdTree& target_tree) {
  CorrPairs pairs;
  pairs.reserve(positions.size());
  for (size_t k = 0; k < positions.size(); ++k)
    pairs.emplace_back(static_cast<uint32_t>(k),
                       static_cast<uint32_t>(target_tree.nearest(positions[k]).first));
  return pairs;
}

}  // namespace

nlohmann::ordered_json run_pipeline(const PipelineConfig& config) {
  if (config.manifest_path.empty())
    throw std::invalid_argument("run_pipeline: manifest path required");
  CollectionManifest manifest = CollectionManifest::load(config.manifest_path);
  const int count = manifest.size();
  fs::create_directories(config.output_dir);

  nlohmann::ordered_json report;
  report["version"] = 1;
  report["config"] = config.to_json();

  std::vector<TriMesh> meshes;
  meshes.reserve(count);
  for (int i = 0; i < count; ++i) meshes.push_back(manifest.load_shape(i));

  Vec3 lo = meshes[0].bbox_min(), hi = meshes[0].bbox_max();
  for (const auto& m : meshes) {
    lo = lo.cwiseMin(m.bbox_min());
    hi = hi.cwiseMax(m.bbox_max());
  }
  double diag = (hi - lo).norm();
  VoxelGrid grid = VoxelGrid::from_box(lo - Vec3::Constant(config.grid_margin * diag),
                                       hi + Vec3::Constant(config.grid_margin * diag),
                                       config.grid_dims);

  nlohmann::ordered_json collection;
  collection["count"] = count;
  collection["template_index"] = manifest.template_index;
  collection["unit_scale"] = manifest.unit_scale;
  collection["has_ground_truth"] = manifest.has_gt();
  report["collection"] = collection;

  const bool needs_generator = config.stage1 || config.stage2;
  std::unique_ptr<ImplicitGenerator> generator;
  if (needs_generator) {
    if (!manifest.generator.empty()) {
      generator = manifest.make_generator();
      report["generator"] = {{"source", "manifest"}, {"variant", generator->variant()}};
    } else {
      generator = std::make_unique<MlpGenerator>(fit_generator_to_collection(
          manifest, meshes, config.mlp_fit_iterations, derive_seed(config.seed, 1)));
      report["generator"] = {{"source", "fit"}, {"variant", "mlp"}};
    }
  }

  auto [trace_mode, trace_probes] = parse_trace_mode(config.trace_mode);

  // Stage I surrogate: regularizer diagnostics at sampled codes.
  if (config.stage1) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int s = 0; s < config.stage1_samples; ++s) {
      int shape = s % count;
      const LatentCode& z = manifest.codes[shape];
      TriMesh level =
          simplify(marching_cubes(*generator, z, grid).mesh, config.simplify_target).mesh;
      DeformQuadForm form = build_combined(level, config.alpha);
      double mu = config.mu >= 0 ? config.mu : default_mu(form);
      InducedSolver solver(form, build_constraints(*generator, level, z), mu);
      double rg = solver.r_geo(trace_mode, trace_probes, derive_seed(config.seed, 100 + s));
      double rc = cycle_residual(*generator, z, s % generator->latent_dim(), config.eps_cyc,
                                 grid, config.simplify_target, config.alpha, config.mu);
      nlohmann::ordered_json row;
      row["shape"] = shape;
      row["level_set_vertices"] = level.n();
      row["r_geo"] = rg;
      row["r_cyc"] = rc;
      row["weighted"] = config.lambda_geo * rg + config.lambda_cyc * rc;
      row["dropped_constraints"] = static_cast<int>(solver.constraints().dropped.size());
      row["mu"] = mu;
      rows.push_back(row);
    }
    report["stage1"] = rows;
  }

  RegistrationConfig reg_config;
  reg_config.data_weight = config.data_weight;
  reg_config.max_outer_iterations = config.max_outer_iterations;
  reg_config.tolerance = config.registration_tolerance;

  const int tmpl_idx = manifest.template_index;
  const TriMesh& template_mesh = meshes[tmpl_idx];
  const int knn = config.knn > 0 ? config.knn : std::min(count - 1, 4);
  ShapeGraph graph = build_shape_graph(manifest.codes, knn, tmpl_idx);

  std::vector<TriMesh> deformed(count);
  deformed[tmpl_idx] = template_mesh;

  if (config.stage2) {
    nlohmann::ordered_json stage2;
    nlohmann::ordered_json residuals = nlohmann::ordered_json::array();
    std::vector<bool> flagged(count, false);
    bool any_flagged = false;
    for (int i = 0; i < count; ++i) {
      if (i == tmpl_idx) {
        residuals.push_back(0.0);
        continue;
      }
      PathRegistrationResult pr = register_along_path(
          template_mesh, *generator, manifest.codes[tmpl_idx], manifest.codes[i],
          config.path_steps, grid, config.simplify_target, reg_config);
      deformed[i] = pr.result.deformed;
      double rms = std::sqrt(pr.result.data_residual);
      residuals.push_back(rms);
      flagged[i] =
          config.force_graph || rms > config.fallback_threshold * diag || pr.any_divergence;
      any_flagged = any_flagged || flagged[i];
    }
    stage2["path_rms_residuals"] = residuals;
    stage2["flagged"] = nlohmann::ordered_json::array();
    for (int i = 0; i < count; ++i)
      if (flagged[i]) stage2["flagged"].push_back(i);
    stage2["graph_route_used"] = any_flagged;
    stage2["knn"] = knn;

    if (any_flagged) {
      // Per-edge registrations between neighboring shapes feed the
      // distortion-weighted shortest paths that replace bad direct routes.
      std::map<std::pair<int, int>, EdgeCorrespondence> edge_maps;
      for (const auto& e : graph.edges) {
        for (auto [a, b] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
          PathRegistrationResult pr = register_along_path(
              deformed[a], *generator, manifest.codes[a], manifest.codes[b],
              config.path_steps, grid, config.simplify_target, reg_config);
          EdgeCorrespondence ec;
          ec.source_points = deformed[a].vertices();
          ec.target_points = pr.result.deformed.vertices();
          edge_maps[{a, b}] = std::move(ec);
        }
      }
      for (auto& e : graph.edges) {
        double wab = edge_distortion(edge_maps[{e.a, e.b}].target_points, deformed[e.a]);
        double wba = edge_distortion(edge_maps[{e.b, e.a}].target_points, deformed[e.b]);
        e.weight = 0.5 * (wab + wba);
      }
      auto propagated = propagate_correspondences(graph, edge_maps, template_mesh.vertices());
      for (int i = 0; i < count; ++i)
        if (flagged[i]) deformed[i] = template_mesh.with_positions(propagated[i]);
      nlohmann::ordered_json weights = nlohmann::ordered_json::array();
      for (const auto& e : graph.edges)
        weights.push_back({{"a", e.a}, {"b", e.b}, {"weight", e.weight}});
      stage2["edge_weights"] = weights;
      stage2["path_parents"] = shortest_path_tree(graph);  // chosen routes
    }

    fs::create_directories(fs::path(config.output_dir) / "stage2");
    for (int i = 0; i < count; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "stage2/deformed_%03d.ply", i);
      save_ply(deformed[i], (fs::path(config.output_dir) / name).string());
    }
    report["stage2"] = stage2;
  } else {
    for (int i = 0; i < count; ++i) deformed[i] = template_mesh;
  }

  DiscreteGenerator mesh_generator = init_generator(deformed, manifest.codes, graph);

  if (config.stage3) {
    std::vector<std::vector<Vec3>> targets;
    targets.reserve(count);
    for (const auto& m : meshes) targets.push_back(m.vertices());
    RefineOptions opt;
    opt.lambda_d = config.lambda_d;
    opt.steps = config.refine_steps;
    opt.step_size = config.refine_step_size;
    opt.rebuild_every = config.rebuild_every;
    RefineResult rr = refine(mesh_generator, targets, opt);
    mesh_generator = std::move(rr.generator);

    fs::create_directories(fs::path(config.output_dir) / "stage3");
    for (int i = 0; i < count; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "stage3/refined_%03d.ply", i);
      save_ply(mesh_generator.mesh(i), (fs::path(config.output_dir) / name).string());
    }
    save_loss_trace_csv(rr.trace,
                        (fs::path(config.output_dir) / "stage3" / "loss_trace.csv").string());

    nlohmann::ordered_json stage3;
    stage3["steps_run"] = rr.trace.empty() ? 0 : rr.trace.back().step + 1;
    stage3["final_chamfer"] = rr.trace.empty() ? 0.0 : rr.trace.back().chamfer;
    stage3["final_acap_reg"] = rr.trace.empty() ? 0.0 : rr.trace.back().acap_reg;
    stage3["final_total"] = rr.trace.empty() ? 0.0 : rr.trace.back().total;
    stage3["step_halvings"] = rr.step_halvings;
    report["stage3"] = stage3;
  }

  // Predicted correspondences: template vertex -> nearest input-mesh vertex.
  std::vector<CorrPairs> predictions(count);
  std::vector<KdTree> target_trees;
  target_trees.reserve(count);
  for (const auto& m : meshes) target_trees.emplace_back(m.vertices());
  for (int i = 0; i < count; ++i) {
    const auto& positions =
        config.stage3 ? mesh_generator.vertex_sets[i] : deformed[i].vertices();
    predictions[i] = snap_to_vertices(positions, target_trees[i]);
    char name[64];
    std::snprintf(name, sizeof(name), "pred_%03d.corr", i);
    save_correspondences_binary(predictions[i], (fs::path(config.output_dir) / name).string());
  }

  if (config.evaluate && manifest.has_gt()) {
    auto metrics_for = [&](const std::vector<CorrPairs>& preds) {
      std::vector<CorrPairs> pred_pairs, gt_pairs;
      std::vector<TriMesh> target_meshes;
      for (int i = 0; i < count; ++i) {
        if (i == tmpl_idx) continue;
        pred_pairs.push_back(preds[i]);
        gt_pairs.push_back(manifest.load_gt(i));
        target_meshes.push_back(meshes[i]);
      }
      return eval_correspondences(pred_pairs, gt_pairs, target_meshes);
    };
    CorrespondenceMetrics metrics = metrics_for(predictions);
    nlohmann::ordered_json jm;
    jm["mean_geodesic_error"] = metrics.mean_geodesic_error;
    jm["median_geodesic_error"] = metrics.median_geodesic_error;
    jm["mean_scaled"] = metrics.mean_geodesic_error * manifest.unit_scale;
    jm["median_scaled"] = metrics.median_geodesic_error * manifest.unit_scale;
    report["metrics"] = jm;

    // Color-coded error fields on the predicted geometry of each target.
    fs::create_directories(fs::path(config.output_dir) / "errors");
    int field = 0;
    for (int i = 0; i < count; ++i) {
      if (i == tmpl_idx) continue;
      TriMesh shape = config.stage3 ? mesh_generator.mesh(i) : deformed[i];
      char name[64];
      std::snprintf(name, sizeof(name), "errors/error_%03d.ply", i);
      export_error_field(metrics.per_vertex_errors[field++], shape,
                         (fs::path(config.output_dir) / name).string());
    }

    if (config.baseline) {
      std::vector<CorrPairs> base_pred(count);
      for (int i = 0; i < count; ++i) {
        if (i == tmpl_idx) {
          base_pred[i] = snap_to_vertices(template_mesh.vertices(), target_trees[i]);
          continue;
        }
        RegistrationResult rr = register_arap(template_mesh, meshes[i], reg_config);
        base_pred[i] = snap_to_vertices(rr.deformed.vertices(), target_trees[i]);
      }
      CorrespondenceMetrics base = metrics_for(base_pred);
      nlohmann::ordered_json jb;
      jb["mean_geodesic_error"] = base.mean_geodesic_error;
      jb["median_geodesic_error"] = base.median_geodesic_error;
      double improvement =
          base.mean_geodesic_error > 0
              ? 100.0 * (base.mean_geodesic_error - metrics.mean_geodesic_error) /
                    base.mean_geodesic_error
              : 0.0;
      jb["mean_error_reduction_pct"] = improvement;
      report["baseline"] = jb;
    }
  }

  std::ofstream out(fs::path(config.output_dir) / "report.json");
  out << report.dump(2) << "\n";
  return report;
}

}  // namespace shapecorr
