#include "shapecorr/trimesh.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace shapecorr {

namespace {

void check_face_indices(int n, const std::vector<std::array<int, 3>>& faces) {
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& tri = faces[f];
    for (int k = 0; k < 3; ++k)
      if (tri[k] < 0 || tri[k] >= n)
        throw std::invalid_argument("face " + std::to_string(f) + ": vertex index " +
                                    std::to_string(tri[k]) + " out of range [0, " +
                                    std::to_string(n) + ")");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw std::invalid_argument("face " + std::to_string(f) +
                                  ": degenerate (repeated vertex index)");
  }
}

}  // namespace

TriMesh TriMesh::from_faces(std::vector<Vec3> vertices,
                            std::vector<std::array<int, 3>> faces) {
  check_face_indices(static_cast<int>(vertices.size()), faces);
  TriMesh m;
  m.vertices_ = std::move(vertices);
  m.faces_ = std::move(faces);
  m.build_adjacency_from_faces();
  m.finalize_bbox();
  return m;
}

TriMesh TriMesh::from_edges(std::vector<Vec3> vertices,
                            const std::vector<std::array<int, 2>>& edges) {
  TriMesh m;
  const int n = static_cast<int>(vertices.size());
  m.vertices_ = std::move(vertices);
  m.adjacency_.assign(n, {});
  for (const auto& e : edges) {
    if (e[0] < 0 || e[0] >= n || e[1] < 0 || e[1] >= n)
      throw std::invalid_argument("edge index out of range");
    if (e[0] == e[1]) throw std::invalid_argument("degenerate edge");
    m.adjacency_[e[0]].push_back(e[1]);
    m.adjacency_[e[1]].push_back(e[0]);
  }
  for (auto& ring : m.adjacency_) {
    std::sort(ring.begin(), ring.end());
    ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
  }
  for (int i = 0; i < n; ++i)
    for (int j : m.adjacency_[i])
      if (i < j) m.edges_.push_back({i, j});
  m.finalize_bbox();
  return m;
}

void TriMesh::build_adjacency_from_faces() {
  adjacency_.assign(vertices_.size(), {});
  for (const auto& tri : faces_) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      adjacency_[a].push_back(b);
      adjacency_[b].push_back(a);
    }
  }
  for (auto& ring : adjacency_) {
    std::sort(ring.begin(), ring.end());
    ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
  }
  edges_.clear();
  for (int i = 0; i < n(); ++i)
    for (int j : adjacency_[i])
      if (i < j) edges_.push_back({i, j});
}

void TriMesh::finalize_bbox() {
  if (vertices_.empty()) return;
  bbox_min_ = bbox_max_ = vertices_[0];
  for (const auto& v : vertices_) {
    bbox_min_ = bbox_min_.cwiseMin(v);
    bbox_max_ = bbox_max_.cwiseMax(v);
  }
}

const std::vector<int>& TriMesh::one_ring(int i) const {
  if (i < 0 || i >= n())
    throw std::out_of_range("one_ring: vertex index " + std::to_string(i) +
                            " out of range [0, " + std::to_string(n()) + ")");
  return adjacency_[i];
}

VecX TriMesh::stacked_positions() const {
  VecX x(3 * n());
  for (int i = 0; i < n(); ++i) x.segment<3>(3 * i) = vertices_[i];
  return x;
}

TriMesh TriMesh::with_positions(const VecX& stacked) const {
  if (stacked.size() != 3 * n())
    throw std::invalid_argument("with_positions: size mismatch");
  std::vector<Vec3> verts(n());
  for (int i = 0; i < n(); ++i) verts[i] = stacked.segment<3>(3 * i);
  return with_positions(std::move(verts));
}

TriMesh TriMesh::with_positions(std::vector<Vec3> vertices) const {
  if (static_cast<int>(vertices.size()) != n())
    throw std::invalid_argument("with_positions: vertex count mismatch");
  TriMesh m = *this;
  m.vertices_ = std::move(vertices);
  m.finalize_bbox();
  return m;
}

Vec3 TriMesh::face_normal(int f) const {
  const auto& tri = faces_[f];
  return (vertices_[tri[1]] - vertices_[tri[0]])
      .cross(vertices_[tri[2]] - vertices_[tri[0]]);
}

double TriMesh::total_area() const {
  double area = 0.0;
  for (int f = 0; f < face_count(); ++f) area += 0.5 * face_normal(f).norm();
  return area;
}

SparseSymMatrix graph_laplacian(const TriMesh& mesh) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(mesh.n() + 4 * mesh.edges().size());
  for (int i = 0; i < mesh.n(); ++i) {
    const auto& ring = mesh.one_ring(i);
    if (!ring.empty()) t.emplace_back(i, i, static_cast<double>(ring.size()));
    for (int j : ring) t.emplace_back(i, j, -1.0);
  }
  return SparseSymMatrix::from_triplets(mesh.n(), t);
}

}  // namespace shapecorr
