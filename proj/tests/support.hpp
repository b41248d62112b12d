#pragma once

// Shared helpers for the test suites: deterministic mesh zoos, displacement
// field builders, and dense reference solvers kept independent of the
// library's production solve paths.

#include <Eigen/Dense>

#include "shapecorr/deform_energy.hpp"
#include "shapecorr/implicit.hpp"
#include "shapecorr/primitives.hpp"
#include "shapecorr/rng.hpp"
#include "shapecorr/trimesh.hpp"

namespace shapecorr::testsupport {

TriMesh jitter_vertices(const TriMesh& mesh, double amplitude, Rng& rng);

/// Deterministic family of small meshes with valid 1-rings, cycling through
/// jittered grids and icospheres of 20-200 vertices.
TriMesh random_mesh(Rng& rng, int index);

VecX random_field(Rng& rng, int n, double scale = 1.0);
VecX translation_field(const TriMesh& mesh, const Vec3& t);
VecX rigid_field(const TriMesh& mesh, const Vec3& c, const Vec3& t);
VecX similarity_field(const TriMesh& mesh, double s, const Vec3& c, const Vec3& t);
VecX scaling_field(const TriMesh& mesh, double s);

/// Dense reference solve of  min d^T Q d + mu |d|^2  s.t.  C d = rhs,
/// via the full KKT matrix and a rank-revealing factorization. Independent
/// of the sparse Schur route used by the library.
VecX dense_constrained_min(const MatX& q, double mu, const MatX& c, const VecX& rhs);

/// Eight blended sphere sites, latent dimension k mostly driving site k:
/// an 8-dim family whose trace quadratic is near-diagonal.
BlendGenerator latent8_blob_family(uint64_t seed);

}  // namespace shapecorr::testsupport
