#pragma once

#include "shapecorr/shape_graph.hpp"
#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// Lookup-table mesh generator: one vertex array per input latent code over a
/// shared topology. Index-aligned vertex arrays are what makes the
/// correspondences consistent across the collection by construction.
struct DiscreteGenerator {
  std::vector<std::array<int, 3>> topology;
  std::vector<std::vector<Vec3>> vertex_sets;  // one per shape
  std::vector<LatentCode> codes;
  ShapeGraph graph;

  int shape_count() const { return static_cast<int>(vertex_sets.size()); }
  int vertex_count() const {
    return vertex_sets.empty() ? 0 : static_cast<int>(vertex_sets[0].size());
  }
  TriMesh mesh(int shape) const { return TriMesh::from_faces(vertex_sets[shape], topology); }
};

/// Builds the generator from the registered templates. The regression onto a
/// lookup table is exact, so the vertex sets are the deformed templates
/// verbatim. Throws on topology mismatch.
DiscreteGenerator init_generator(const std::vector<TriMesh>& deformed_templates,
                                 const std::vector<LatentCode>& codes,
                                 const ShapeGraph& graph);

}  // namespace shapecorr
