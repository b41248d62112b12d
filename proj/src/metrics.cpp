#include "shapecorr/metrics.hpp"

#include <algorithm>
#include <map>

#include "shapecorr/geodesic.hpp"

namespace shapecorr {

CorrespondenceMetrics eval_correspondences(const std::vector<CorrPairs>& predictions,
                                           const std::vector<CorrPairs>& ground_truth,
                                           const std::vector<TriMesh>& targets) {
  if (predictions.size() != ground_truth.size() || predictions.size() != targets.size())
    throw std::invalid_argument("eval_correspondences: per-pair inputs must align");

  CorrespondenceMetrics metrics;
  std::vector<double> pooled;
  double sum = 0.0;
  for (size_t pair = 0; pair < predictions.size(); ++pair) {
    const TriMesh& target = targets[pair];
    std::map<uint32_t, uint32_t> gt_of;
    for (const auto& [src, tgt] : ground_truth[pair]) gt_of[src] = tgt;
    if (gt_of.size() != predictions[pair].size())
      throw std::invalid_argument("eval_correspondences: pair " + std::to_string(pair) +
                                  ": prediction/ground-truth coverage mismatch");

    // Geodesic fields from each distinct ground-truth target vertex.
    std::map<uint32_t, VecX> fields;
    VecX errors = VecX::Constant(
        1 + std::max_element(gt_of.begin(), gt_of.end(),
                             [](auto& a, auto& b) { return a.first < b.first; })->first,
        -1.0);
    for (const auto& [src, tgt_pred] : predictions[pair]) {
      auto it = gt_of.find(src);
      if (it == gt_of.end())
        throw std::invalid_argument("eval_correspondences: pair " + std::to_string(pair) +
                                    ": source vertex " + std::to_string(src) +
                                    " lacks ground truth");
      uint32_t tgt_gt = it->second;
      auto field = fields.find(tgt_gt);
      if (field == fields.end())
        field = fields.emplace(tgt_gt, geodesic_distances(target, {int(tgt_gt)})).first;
      double err = field->second[tgt_pred];
      errors[src] = err;
      pooled.push_back(err);
      sum += err;
    }
    metrics.per_vertex_errors.push_back(std::move(errors));
  }
  if (pooled.empty()) throw std::invalid_argument("eval_correspondences: no pairs");
  metrics.mean_geodesic_error = sum / pooled.size();
  std::sort(pooled.begin(), pooled.end());
  size_t mid = pooled.size() / 2;
  metrics.median_geodesic_error =
      pooled.size() % 2 ? pooled[mid] : 0.5 * (pooled[mid - 1] + pooled[mid]);
  return metrics;
}

namespace {
// Five-stop ramp, piecewise linear in t = error / max_error.
constexpr double kStops[5][3] = {
    {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
}  // namespace

std::array<uint8_t, 3> error_color(double error, double max_error) {
  double t = std::clamp(error / max_error, 0.0, 1.0) * 4.0;
  int seg = std::min(3, static_cast<int>(t));
  double f = t - seg;
  std::array<uint8_t, 3> c;
  for (int k = 0; k < 3; ++k)
    c[k] = static_cast<uint8_t>(std::lround((1.0 - f) * kStops[seg][k] + f * kStops[seg + 1][k]));
  return c;
}

double decode_error_color(const std::array<uint8_t, 3>& color, double max_error) {
  // Nearest point on the ramp by scanning its quantization.
  double best_t = 0.0;
  long best_d = std::numeric_limits<long>::max();
  for (int step = 0; step <= 1024; ++step) {
    double t = step / 1024.0;
    auto c = error_color(t * max_error, max_error);
    long d = 0;
    for (int k = 0; k < 3; ++k) {
      long diff = long(c[k]) - long(color[k]);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best_t = t;
    }
  }
  return best_t * max_error;
}

void export_error_field(const VecX& per_vertex_errors, const TriMesh& mesh,
                        const std::string& path, double max_error) {
  if (per_vertex_errors.size() != mesh.n())
    throw std::invalid_argument("export_error_field: error field size mismatch");
  std::vector<std::array<uint8_t, 3>> colors(mesh.n());
  for (int i = 0; i < mesh.n(); ++i) colors[i] = error_color(per_vertex_errors[i], max_error);
  save_ply_colored(mesh, colors, path);
}

}  // namespace shapecorr
