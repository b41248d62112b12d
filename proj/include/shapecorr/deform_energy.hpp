#pragma once

#include <vector>

#include "shapecorr/trimesh.hpp"

namespace shapecorr {

enum class DeformKind { Arap, Acap, Combined };

/// Default tradeoff weight between the rigidity and conformality terms in
/// the combined form.
inline constexpr double kDefaultAlpha = 10.0;

/// Quadratic form d^T M d over per-vertex displacement fields d in R^{3n}
/// measuring local rigidity (ARAP), local conformality (ACAP), or the
/// weighted combination alpha * ARAP + ACAP.
///
/// Null spaces: global translations (all kinds); infinitesimal rotations
/// (ARAP and ACAP); uniform scaling about the origin (ACAP only).
struct DeformQuadForm {
  SparseSymMatrix matrix;  // 3n x 3n, PSD
  DeformKind kind = DeformKind::Arap;
  double alpha = 0.0;  // meaningful for Combined

  std::vector<int> isolated_vertices;   // valence 0: Laplacian row is zero
  std::vector<int> regularized_rings;   // near-singular 1-ring systems

  double energy(const VecX& d) const { return matrix.quad(d); }
};

DeformQuadForm build_arap(const TriMesh& mesh);
DeformQuadForm build_acap(const TriMesh& mesh);
DeformQuadForm build_combined(const TriMesh& mesh, double alpha = kDefaultAlpha);

/// Ground-truth energies: per-vertex closed-form minimization over the local
/// rotation (3x3 normal equations) or similarity (4x4) variables, solved with
/// a pseudoinverse for flat 1-rings. The quadratic forms above must reproduce
/// these values; tests rely on that equivalence.
double arap_energy_oracle(const TriMesh& mesh, const VecX& d);
double acap_energy_oracle(const TriMesh& mesh, const VecX& d);

}  // namespace shapecorr
