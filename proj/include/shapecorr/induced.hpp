#pragma once

#include <Eigen/SparseLU>
#include <memory>
#include <optional>

#include "shapecorr/deform_energy.hpp"
#include "shapecorr/implicit.hpp"
#include "shapecorr/marching_cubes.hpp"

namespace shapecorr {

/// Per-vertex linearized level-set constraints C d = -eps F v on a
/// discretized level set: row i of C holds grad_x^T at vertex i (block
/// diagonal), row i of F holds grad_z^T. Vertices with a degenerate spatial
/// gradient lose their row and are recorded in `dropped`.
struct ConstraintSystem {
  SpMat C;                   // kept x 3n
  MatX F;                    // kept x d
  std::vector<int> kept;     // mesh vertex per constraint row
  std::vector<int> dropped;  // filtered degenerate-normal vertices
  int vertex_count = 0;
  LatentCode z;

  int rows() const { return static_cast<int>(kept.size()); }
};

ConstraintSystem build_constraints(const ImplicitGenerator& gen, const TriMesh& mesh,
                                   const LatentCode& z);

struct SolveDiagnostics {
  double constraint_residual_inf = 0.0;  // ||C d + eps F v||_inf
  double kkt_residual_inf = 0.0;         // ||(L + mu I) d + C^T lambda||_inf
  double objective = 0.0;                // d^T L d + mu |d|^2
  double energy = 0.0;                   // d^T L d
  double mu = 0.0;
  int dropped_constraints = 0;
  bool minimum_norm_fallback = false;
};

/// Displacement field mapping the discretized level set at z onto the one at
/// z + eps v.
struct CorrespondenceField {
  VecX d;  // 3n
  VecX v;
  double epsilon = 0.0;
  SolveDiagnostics diagnostics;
};

/// d^v(z) = -eps G v for every direction v.
struct TransferOperator {
  MatX G;  // 3n x d
  VecX apply(const VecX& v, double epsilon) const { return -epsilon * (G * v); }
};

enum class TraceMode { Exact, Hutchinson };

/// Default QP regularizer: 1e-6 times the mean diagonal of the deformation
/// form. Small enough to sit below test tolerances, large enough to suppress
/// constraint-free null modes (a rotating sphere).
double default_mu(const DeformQuadForm& form);

/// Equality-constrained quadratic solves against a fixed deformation form and
/// constraint system, through the (regularized) KKT matrix
/// [[L + mu I, C^T], [C, 0]]. The factorization is reused across directions,
/// basis solves, and trace probes. mu = 0 is allowed whenever the KKT system
/// is nonsingular; a singular system falls back to dense minimum-norm least
/// squares and flags the diagnostics.
class InducedSolver {
 public:
  InducedSolver(const DeformQuadForm& form, ConstraintSystem cs, double mu);

  CorrespondenceField solve_displacement(const VecX& v, double epsilon) const;
  TransferOperator transfer_operator() const;

  /// Tr(E) with E = F^T (C L^+ C^T)^+ F, evaluated through per-direction
  /// solve energies (exact: all d basis vectors; Hutchinson: m Rademacher
  /// probes).
  double trace_quadratic(TraceMode mode, int probes, uint64_t seed) const;

  /// Vol(B_d)/d * Tr(E)  (the geometric regularizer at this z).
  double r_geo(TraceMode mode = TraceMode::Exact, int probes = 64, uint64_t seed = 0) const;

  const ConstraintSystem& constraints() const { return cs_; }
  double mu() const { return mu_; }
  bool used_fallback() const { return fallback_.has_value(); }

 private:
  VecX kkt_solve(const VecX& rhs_constraints) const;  // returns [d; lambda]

  const DeformQuadForm& form_;
  ConstraintSystem cs_;
  double mu_;
  int n3_ = 0;
  SpMat kkt_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
  std::optional<Eigen::CompleteOrthogonalDecomposition<MatX>> fallback_;
};

/// Free-function forms of the solver operations (one-shot construction).
CorrespondenceField solve_displacement(const DeformQuadForm& form, const ConstraintSystem& cs,
                                       const VecX& v, double epsilon, double mu);
TransferOperator transfer_operator(const DeformQuadForm& form, const ConstraintSystem& cs,
                                   double mu);
double r_geo(const DeformQuadForm& form, const ConstraintSystem& cs, double mu,
             TraceMode mode = TraceMode::Exact, int probes = 64, uint64_t seed = 0);

double unit_ball_volume(int dim);

/// Default latent step for the cycle-consistency finite difference.
inline constexpr double kDefaultCycleStep = 1e-2;

/// Finite-difference 3-cycle distortion (1/h) |G(z + h e_i) - G(z)|_F^2 with
/// h = eps_cyc. Both transfer operators are evaluated in a shared vertex
/// frame: the level set at z is discretized once, and the perturbed operator
/// uses the same topology with vertices advected by the induced field.
double cycle_residual(const ImplicitGenerator& gen, const LatentCode& z, int basis_index,
                      double eps_cyc, const VoxelGrid& grid, int simplify_target, double alpha,
                      double mu);

struct AdvectResult {
  TriMesh mesh;
  LatentCode z;
  SolveDiagnostics diagnostics;
};

/// One correspondence-propagation step: displaces the discretized level set
/// at z onto z + eps v. Optional Newton projection pulls each displaced
/// vertex back onto the new level set along grad_x (at most `newton_steps`
/// steps of at most 0.5 eps each).
AdvectResult advect(const ImplicitGenerator& gen, const TriMesh& mesh, const LatentCode& z,
                    const VecX& v, double epsilon, double alpha, double mu,
                    int newton_steps = 0);

}  // namespace shapecorr
