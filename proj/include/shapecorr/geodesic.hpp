#pragma once

#include <vector>

#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// Dijkstra over the edge graph with Euclidean edge lengths. Vertices not
/// edge-connected to any source get +infinity. Throws on an empty source set.
/// Note this edge-graph metric overestimates true surface geodesics.
VecX geodesic_distances(const TriMesh& mesh, const std::vector<int>& sources);

}  // namespace shapecorr
