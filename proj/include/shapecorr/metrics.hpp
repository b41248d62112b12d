#pragma once

#include "shapecorr/mesh_io.hpp"
#include "shapecorr/trimesh.hpp"

namespace shapecorr {

struct CorrespondenceMetrics {
  double mean_geodesic_error = 0.0;
  double median_geodesic_error = 0.0;
  std::vector<VecX> per_vertex_errors;  // one field per shape pair, indexed by source vertex
};

/// Geodesic errors of predicted correspondences: for each source vertex, the
/// edge-graph geodesic distance on the target mesh between the predicted and
/// ground-truth target vertices. Mean over all vertices and shape pairs;
/// median over the pooled sample. Predictions and ground truth must cover the
/// same source vertex set per pair.
CorrespondenceMetrics eval_correspondences(const std::vector<CorrPairs>& predictions,
                                           const std::vector<CorrPairs>& ground_truth,
                                           const std::vector<TriMesh>& targets);

/// Color-bar maximum used by the exported error plots.
inline constexpr double kDefaultErrorColorMax = 0.15;

/// Per-vertex error color ramp (blue -> cyan -> green -> yellow -> red),
/// clamped at max_error.
std::array<uint8_t, 3> error_color(double error, double max_error);
/// Inverse of error_color up to quantization; used to validate exports.
double decode_error_color(const std::array<uint8_t, 3>& color, double max_error);

/// Writes the mesh as an ASCII PLY with per-vertex colors on the fixed ramp.
void export_error_field(const VecX& per_vertex_errors, const TriMesh& mesh,
                        const std::string& path, double max_error = kDefaultErrorColorMax);

}  // namespace shapecorr
