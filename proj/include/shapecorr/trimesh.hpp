#pragma once

#include <array>
#include <vector>

#include "shapecorr/sparse.hpp"

namespace shapecorr {

/// Indexed triangle mesh with symmetric 1-ring adjacency. Treat instances as
/// immutable after construction; all pipeline steps build new meshes.
///
/// Adjacency comes from faces, or from an explicit edge list for faceless
/// graph meshes (used by the deformation energies, which only need edges).
class TriMesh {
 public:
  TriMesh() = default;

  static TriMesh from_faces(std::vector<Vec3> vertices,
                            std::vector<std::array<int, 3>> faces);
  static TriMesh from_edges(std::vector<Vec3> vertices,
                            const std::vector<std::array<int, 2>>& edges);

  int n() const { return static_cast<int>(vertices_.size()); }
  int face_count() const { return static_cast<int>(faces_.size()); }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& faces() const { return faces_; }
  const Vec3& vertex(int i) const { return vertices_[i]; }

  /// Neighbors of vertex i (sorted, unique). Throws on out-of-range i.
  const std::vector<int>& one_ring(int i) const;

  /// Undirected edge list, each pair (i, j) with i < j.
  const std::vector<std::array<int, 2>>& edges() const { return edges_; }

  Vec3 bbox_min() const { return bbox_min_; }
  Vec3 bbox_max() const { return bbox_max_; }
  double bbox_diag() const { return (bbox_max_ - bbox_min_).norm(); }

  /// Stacked vertex coordinates (x0,y0,z0,x1,...) as a 3n-vector.
  VecX stacked_positions() const;

  /// Same topology, vertices replaced by the rows of a 3n-vector.
  TriMesh with_positions(const VecX& stacked) const;
  TriMesh with_positions(std::vector<Vec3> vertices) const;

  double total_area() const;
  Vec3 face_normal(int f) const;  // unnormalized (2x area weighted)

 private:
  void finalize_bbox();
  void build_adjacency_from_faces();

  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<std::array<int, 2>> edges_;
  Vec3 bbox_min_ = Vec3::Zero();
  Vec3 bbox_max_ = Vec3::Zero();
};

/// Graph Laplacian: L_ii = |N_i|, L_ij = -1 for j in N_i.
SparseSymMatrix graph_laplacian(const TriMesh& mesh);

}  // namespace shapecorr
