#pragma once

#include <optional>

#include "shapecorr/implicit.hpp"
#include "shapecorr/kdtree.hpp"
#include "shapecorr/marching_cubes.hpp"
#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// Closest point on a triangle mesh surface: nearest vertex via kd-tree,
/// refined over the triangles around that vertex and its ring.
class ClosestPointQuery {
 public:
  explicit ClosestPointQuery(const TriMesh& mesh);

  struct Hit {
    Vec3 point;
    double squared_distance;
    int nearest_vertex;
  };
  Hit operator()(const Vec3& query) const;

 private:
  const TriMesh& mesh_;
  KdTree tree_;
  std::vector<std::vector<int>> vertex_faces_;
};

struct RegistrationConfig {
  double data_weight = 1.0;         // soft closest-point weight against unit ARAP
  int max_outer_iterations = 100;
  double tolerance = 1e-10;         // relative total-energy change
  bool point_to_plane = false;      // project targets onto the tangent plane
};

struct RegistrationResult {
  TriMesh deformed;               // template topology, target geometry
  double data_residual = 0.0;     // mean squared closest-point distance
  double arap_energy = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Non-rigid alignment by alternating closest-point correspondences with a
/// local-global ARAP solve (per-vertex rotations by SVD, one prefactored
/// Laplacian system for the global step).
RegistrationResult register_arap(const TriMesh& source, const TriMesh& target,
                                 const RegistrationConfig& config = {});

struct PathRegistrationResult {
  RegistrationResult result;            // against the z_target level set
  std::vector<double> step_residuals;   // per intermediate registration
  bool any_divergence = false;
};

/// Interpolation-guided registration: extracts level-set meshes along the
/// latent path from z_temp to z_target and registers sequentially, each step
/// initializing the next. Throws EmptySurfaceError naming the failing step.
PathRegistrationResult register_along_path(const TriMesh& template_mesh,
                                           const ImplicitGenerator& gen,
                                           const LatentCode& z_temp,
                                           const LatentCode& z_target, int T,
                                           const VoxelGrid& grid, int simplify_target,
                                           const RegistrationConfig& config = {});

/// Mean squared relative stretch of the mapped edges:
/// sum_edges ((|m_i - m_j| - |v_i - v_j|) / |v_i - v_j|)^2 / |edges|.
/// Zero-length source edges are skipped and counted.
double edge_distortion(const std::vector<Vec3>& mapped_positions, const TriMesh& source,
                       int* skipped_edges = nullptr);

}  // namespace shapecorr
