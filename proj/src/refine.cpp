#include "shapecorr/refine.hpp"

#include <fstream>

#include "shapecorr/deform_energy.hpp"
#include "shapecorr/kdtree.hpp"

namespace shapecorr {

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
  KdTree ta(a), tb(b);
  double ab = 0.0, ba = 0.0;
  for (const auto& p : a) ab += tb.nearest(p).second;
  for (const auto& p : b) ba += ta.nearest(p).second;
  return ab / a.size() + ba / b.size();
}

namespace {

VecX stack(const std::vector<Vec3>& pts) {
  VecX x(3 * pts.size());
  for (size_t i = 0; i < pts.size(); ++i) x.segment<3>(3 * i) = pts[i];
  return x;
}

struct FrozenReg {
  // One ACAP form per graph edge, built at the edge's source shape.
  std::vector<SparseSymMatrix> forms;

  static FrozenReg build(const DiscreteGenerator& gen) {
    FrozenReg reg;
    reg.forms.reserve(gen.graph.edges.size());
    for (const auto& e : gen.graph.edges)
      reg.forms.push_back(build_acap(gen.mesh(e.a)).matrix);
    return reg;
  }

  double value(const DiscreteGenerator& gen) const {
    if (gen.graph.edges.empty()) return 0.0;
    double sum = 0.0;
    for (size_t e = 0; e < gen.graph.edges.size(); ++e) {
      VecX delta = stack(gen.vertex_sets[gen.graph.edges[e].b]) -
                   stack(gen.vertex_sets[gen.graph.edges[e].a]);
      sum += forms[e].quad(delta);
    }
    return sum / gen.graph.edges.size();
  }

  // d/d(vertex_sets) of value(), accumulated into grads.
  void add_gradient(const DiscreteGenerator& gen, double weight,
                    std::vector<VecX>& grads) const {
    if (gen.graph.edges.empty()) return;
    double scale = weight / gen.graph.edges.size();
    for (size_t e = 0; e < gen.graph.edges.size(); ++e) {
      int a = gen.graph.edges[e].a, b = gen.graph.edges[e].b;
      VecX delta = stack(gen.vertex_sets[b]) - stack(gen.vertex_sets[a]);
      VecX g = 2.0 * scale * forms[e].mult(delta);
      grads[b] += g;
      grads[a] -= g;
    }
  }
};

}  // namespace

double acap_deformation_reg(const DiscreteGenerator& gen) {
  return FrozenReg::build(gen).value(gen);
}

RefineResult refine(const DiscreteGenerator& gen,
                    const std::vector<std::vector<Vec3>>& targets,
                    const RefineOptions& options) {
  const int shapes = gen.shape_count();
  const int n = gen.vertex_count();
  if (static_cast<int>(targets.size()) != shapes)
    throw std::invalid_argument("refine: one target sample set per shape required");
  for (size_t s = 0; s < targets.size(); ++s) {
    if (targets[s].size() < 100)
      throw std::invalid_argument("refine: need >= 100 target samples per shape");
    for (const auto& p : targets[s])
      if (!p.allFinite())
        throw std::invalid_argument("refine: non-finite target sample for shape " +
                                    std::to_string(s));
  }
  if (options.lambda_d < 0.0) throw std::invalid_argument("refine: lambda_d must be >= 0");

  std::vector<KdTree> target_trees;
  target_trees.reserve(shapes);
  for (const auto& t : targets) target_trees.emplace_back(t);

  RefineResult out;
  out.generator = gen;
  DiscreteGenerator& cur = out.generator;

  double step_size = options.step_size > 0.0
                         ? options.step_size
                         : 0.25 * static_cast<double>(n) * shapes;

  auto chamfer_mean = [&]() {
    double sum = 0.0;
    for (int s = 0; s < shapes; ++s) sum += chamfer(cur.vertex_sets[s], targets[s]);
    return sum / shapes;
  };

  // Gradient of the mean Chamfer term with hard closest-point pairing.
  auto add_chamfer_gradient = [&](std::vector<VecX>& grads) {
    for (int s = 0; s < shapes; ++s) {
      const auto& verts = cur.vertex_sets[s];
      const auto& tgt = targets[s];
      KdTree vert_tree(verts);
      double wa = 2.0 / (static_cast<double>(verts.size()) * shapes);
      double wb = 2.0 / (static_cast<double>(tgt.size()) * shapes);
      for (int k = 0; k < n; ++k) {
        Vec3 nn = tgt[target_trees[s].nearest(verts[k]).first];
        grads[s].segment<3>(3 * k) += wa * (verts[k] - nn);
      }
      for (const auto& b : tgt) {
        int k = vert_tree.nearest(b).first;
        grads[s].segment<3>(3 * k) += wb * (verts[k] - b);
      }
    }
  };

  int step = 0;
  while (step < options.steps) {
    // One epoch: freeze the regularizer matrices, snapshot, run, verify.
    FrozenReg reg = FrozenReg::build(cur);
    double start_total = chamfer_mean() + options.lambda_d * reg.value(cur);
    auto snapshot = cur.vertex_sets;
    auto trace_snapshot_size = out.trace.size();

    int epoch_steps = std::min(options.rebuild_every, options.steps - step);
    for (int e = 0; e < epoch_steps; ++e) {
      std::vector<VecX> grads(shapes, VecX::Zero(3 * n));
      add_chamfer_gradient(grads);
      reg.add_gradient(cur, options.lambda_d, grads);
      for (int s = 0; s < shapes; ++s) {
        if (!grads[s].allFinite())
          throw std::runtime_error("refine: non-finite gradient at step " +
                                   std::to_string(step + e) + ", shape " + std::to_string(s) +
                                   " (state dumped to trace)");
        for (int k = 0; k < n; ++k)
          cur.vertex_sets[s][k] -= step_size * Vec3(grads[s].segment<3>(3 * k));
      }
      out.trace.push_back({step + e, chamfer_mean(), reg.value(cur), 0.0});
      out.trace.back().total =
          out.trace.back().chamfer + options.lambda_d * out.trace.back().acap_reg;
    }

    double end_total = chamfer_mean() + options.lambda_d * FrozenReg::build(cur).value(cur);
    if (end_total > start_total + 1e-9) {
      // Roll the epoch back and retry at half the step.
      cur.vertex_sets = std::move(snapshot);
      out.trace.resize(trace_snapshot_size);
      step_size *= 0.5;
      if (++out.step_halvings > 60) break;  // step has collapsed to nothing
      continue;
    }
    step += epoch_steps;
  }
  out.final_step_size = step_size;
  return out;
}

void save_loss_trace_csv(const std::vector<RefineTraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "step,chamfer,acap_reg,total\n";
  out.precision(17);
  for (const auto& row : trace)
    out << row.step << "," << row.chamfer << "," << row.acap_reg << "," << row.total << "\n";
}

}  // namespace shapecorr
