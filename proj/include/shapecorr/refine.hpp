#pragma once

#include <string>

#include "shapecorr/discrete_generator.hpp"

namespace shapecorr {

/// Symmetric Chamfer distance: mean over a of the min squared distance to b,
/// plus the same with the roles swapped.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// Conformality of the deformations between graph-adjacent shapes:
/// sum over edges (a, b) of (m_b - m_a)^T Lacap(m_a) (m_b - m_a), averaged
/// over the edges. The lookup-table generator turns the latent-direction
/// integral into exactly these finite differences.
double acap_deformation_reg(const DiscreteGenerator& gen);

/// Default regularizer weight, on the same scale as the geometric
/// regularizer weight.
inline constexpr double kDefaultLambdaD = 1e-3;

struct RefineOptions {
  double lambda_d = kDefaultLambdaD;
  int steps = 200;
  double step_size = 0.0;  // <= 0: auto (0.25 * vertices * shapes)
  int rebuild_every = 10;  // regularizer matrices refresh cadence (epoch)
};

struct RefineTraceRow {
  int step;
  double chamfer;
  double acap_reg;
  double total;
};

struct RefineResult {
  DiscreteGenerator generator;
  std::vector<RefineTraceRow> trace;  // one row per completed step
  int step_halvings = 0;
  double final_step_size = 0.0;
};

/// Gradient descent on the vertex sets: Chamfer via closest-point pairing
/// refreshed every step, the quadratic regularizer with matrices frozen
/// within each epoch. If an epoch ends with a higher total loss it is rolled
/// back and retried at half the step size, which keeps the epoch-boundary
/// loss trace non-increasing. Throws on non-finite gradients with the step
/// and shape identified.
RefineResult refine(const DiscreteGenerator& gen,
                    const std::vector<std::vector<Vec3>>& targets,
                    const RefineOptions& options = {});

void save_loss_trace_csv(const std::vector<RefineTraceRow>& trace, const std::string& path);

}  // namespace shapecorr
