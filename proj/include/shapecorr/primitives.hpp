#pragma once

#include "shapecorr/trimesh.hpp"

namespace shapecorr {

TriMesh make_tetrahedron(double scale = 1.0);

/// Icosphere: subdivided icosahedron projected to the given radius.
/// subdivisions=0 gives 20 faces; each level quadruples the face count.
TriMesh make_icosphere(int subdivisions, double radius = 1.0);

/// Planar grid in the xy-plane, rows x cols vertices, quads split along the
/// (i,j)-(i+1,j+1) diagonal.
TriMesh make_grid_mesh(int rows, int cols, double spacing = 1.0);

}  // namespace shapecorr
