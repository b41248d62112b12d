#pragma once

#include <map>
#include <vector>

#include "shapecorr/implicit.hpp"
#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// K-NN graph defaults per shape category.
inline constexpr int kDefaultKnnHuman = 25;
inline constexpr int kDefaultKnnAnimal = 40;

struct ShapeGraphEdge {
  int a = 0, b = 0;       // a < b
  double weight = -1.0;   // distortion weight; negative while unset
};

/// K-NN graph over latent codes: each node selects its K nearest neighbors
/// under Euclidean latent distance and the selections are symmetrized by
/// union. Edge weights (mapped-edge distortion) are filled in after the
/// per-edge registrations run.
struct ShapeGraph {
  int template_node = 0;
  int k = 0;
  std::vector<LatentCode> codes;
  std::vector<ShapeGraphEdge> edges;
  std::vector<std::vector<int>> adjacency;  // edge indices per node

  int node_count() const { return static_cast<int>(codes.size()); }
  int edge_index(int a, int b) const;  // -1 when absent
};

ShapeGraph build_shape_graph(const std::vector<LatentCode>& codes, int k,
                             int template_node = 0);

/// Dijkstra over edge distortion weights from the template node. Ties break
/// to the lower node index. Returns the predecessor array (-1 at the root);
/// throws listing the unreachable nodes if the graph is not connected from
/// the template.
std::vector<int> shortest_path_tree(const ShapeGraph& graph);

/// One registered edge a -> b: index-aligned point sets, source_points[k] on
/// shape a corresponding to target_points[k] on shape b.
struct EdgeCorrespondence {
  std::vector<Vec3> source_points;
  std::vector<Vec3> target_points;
};

/// Composes correspondences from the template node to every node along the
/// shortest-path tree. Each hop snaps the incoming positions to the nearest
/// source point of the edge map and emits the paired target point. Entry
/// [node][v] is the position of template vertex v on that node's shape.
std::vector<std::vector<Vec3>> propagate_correspondences(
    const ShapeGraph& graph,
    const std::map<std::pair<int, int>, EdgeCorrespondence>& edge_maps,
    const std::vector<Vec3>& template_points);

}  // namespace shapecorr
