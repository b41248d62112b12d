#pragma once

#include <json.hpp>

#include "shapecorr/deform_energy.hpp"
#include "shapecorr/induced.hpp"
#include "shapecorr/refine.hpp"
#include "shapecorr/simplify.hpp"
#include "shapecorr/synth.hpp"

namespace shapecorr {

/// All pipeline knobs. Every field echoes into the report, and every field
/// can be set from a JSON config file or a CLI flag.
struct PipelineConfig {
  std::string manifest_path;
  std::string output_dir = "out";
  uint64_t seed = 0;

  bool stage1 = true;
  bool stage2 = true;
  bool stage3 = true;
  bool evaluate = true;
  bool baseline = true;

  double epsilon = kDefaultLevelStep;   // level-set step
  double alpha = kDefaultAlpha;         // rigidity/conformality tradeoff
  double lambda_geo = 1e-3;
  double lambda_cyc = 1e-4;
  int path_steps = kDefaultPathSteps;   // interpolation path length T
  int knn = 0;                          // 0: min(count - 1, 4)
  double mu = -1.0;                     // < 0: trace-scaled default
  double eps_cyc = kDefaultCycleStep;
  std::array<int, 3> grid_dims = {48, 48, 48};
  double grid_margin = 0.15;            // bbox padding fraction
  int simplify_target = kDefaultSimplifyTarget;
  double lambda_d = kDefaultLambdaD;
  int refine_steps = 200;
  double refine_step_size = 0.0;        // <= 0: auto
  int rebuild_every = 10;
  int stage1_samples = 2;
  std::string trace_mode = "exact";     // "exact" or "hutchinson:<m>"
  double fallback_threshold = 0.02;     // of bbox diag; graph route trigger
  bool force_graph = false;             // route every shape through the graph
  double data_weight = 1.0;
  int max_outer_iterations = 100;
  double registration_tolerance = 1e-10;
  int mlp_fit_iterations = 1500;        // generator fit fallback

  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

/// Parses "exact" or "hutchinson:<m>".
std::pair<TraceMode, int> parse_trace_mode(const std::string& mode);

/// Runs the staged pipeline and writes artifacts plus report.json under
/// config.output_dir. Returns the report.
nlohmann::ordered_json run_pipeline(const PipelineConfig& config);

}  // namespace shapecorr
