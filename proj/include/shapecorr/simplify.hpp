#pragma once

#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// Stock face budget for level-set meshes entering the solvers.
inline constexpr int kDefaultSimplifyTarget = 2000;

struct SimplifyResult {
  TriMesh mesh;
  bool reached_target = true;  // false when no further collapse was possible
  int collapses = 0;
};

/// Quadric-error-metric edge collapse down to at most target_faces faces.
/// Boundary edges are protected by a large penalty quadric; collapses that
/// would flip a surviving face normal or pinch the mesh are rejected.
SimplifyResult simplify(const TriMesh& mesh, int target_faces);

}  // namespace shapecorr
