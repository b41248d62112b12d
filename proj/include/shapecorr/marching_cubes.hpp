#pragma once

#include <array>
#include <stdexcept>

#include "shapecorr/implicit.hpp"
#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// Stock extraction grids per shape category.
inline constexpr std::array<int, 3> kGridDimsHuman = {64, 77, 64};
inline constexpr std::array<int, 3> kGridDimsAnimal = {82, 50, 71};

struct VoxelGrid {
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  std::array<int, 3> dims = {2, 2, 2};  // node counts per axis

  VoxelGrid() = default;
  VoxelGrid(Vec3 origin, Vec3 spacing, std::array<int, 3> dims);

  /// Grid spanning [lo, hi] with the given node counts.
  static VoxelGrid from_box(const Vec3& lo, const Vec3& hi, std::array<int, 3> dims);

  Vec3 node(int i, int j, int k) const {
    return origin + Vec3(i * spacing[0], j * spacing[1], k * spacing[2]);
  }
};

class EmptySurfaceError : public std::runtime_error {
 public:
  explicit EmptySurfaceError(const std::string& what) : std::runtime_error(what) {}
};

struct ExtractResult {
  TriMesh mesh;
  bool clipped = false;  // level set touches the grid boundary
};

/// Standard 256-case marching cubes over the zero level set of f(., z).
/// Vertices sit on grid edges by linear interpolation, triangles are oriented
/// with normals pointing toward positive field values, and shared cell faces
/// use a sign-only pairing rule so the output is watertight wherever the
/// surface stays interior. Throws EmptySurfaceError when nothing crosses zero.
ExtractResult marching_cubes(const ImplicitGenerator& gen, const LatentCode& z,
                             const VoxelGrid& grid, int threads = 1);

}  // namespace shapecorr
