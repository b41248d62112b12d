#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// Parse error carrying the file and the line (text) or byte offset (binary)
/// where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& path, long line_or_offset, const std::string& what,
              bool binary = false)
      : std::runtime_error(path + (binary ? " (offset " : " (line ") +
                           std::to_string(line_or_offset) + "): " + what) {}
};

/// Loads an OBJ or PLY mesh (dispatch on extension, falling back to content
/// sniffing). Vertex order is preserved. Non-manifold input is accepted.
TriMesh load_mesh(const std::string& path);

TriMesh load_obj(const std::string& path);
TriMesh load_ply(const std::string& path);

void save_obj(const TriMesh& mesh, const std::string& path);
/// binary=true writes binary_little_endian with float64 positions, so
/// save -> load round-trips coordinates bit-exactly.
void save_ply(const TriMesh& mesh, const std::string& path, bool binary = true);

/// Per-vertex colored PLY (uchar RGB), used by the error-field export.
void save_ply_colored(const TriMesh& mesh, const std::vector<std::array<uint8_t, 3>>& colors,
                      const std::string& path);

using CorrPairs = std::vector<std::pair<uint32_t, uint32_t>>;

/// Correspondence files: text lines "src tgt" (0-based), or binary streams of
/// little-endian u32 pairs behind the 8-byte magic "CORRv001".
CorrPairs load_correspondences(const std::string& path);
void save_correspondences_text(const CorrPairs& pairs, const std::string& path);
void save_correspondences_binary(const CorrPairs& pairs, const std::string& path);

}  // namespace shapecorr
