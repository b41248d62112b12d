#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "shapecorr/implicit.hpp"
#include "shapecorr/mesh_io.hpp"
#include "shapecorr/trimesh.hpp"

namespace shapecorr {

/// Collection manifest: shape meshes with their latent codes, an optional
/// analytic (or MLP weights file) generator spec, optional ground-truth
/// correspondence files against the template shape, and a unit scale that
/// converts model units into physical units for reporting.
struct CollectionManifest {
  std::vector<std::string> mesh_paths;           // relative to the manifest dir
  std::vector<LatentCode> codes;
  std::vector<std::string> gt_corr_paths;        // empty when unknown
  int template_index = 0;
  double unit_scale = 1.0;
  nlohmann::ordered_json generator;              // empty when none

  std::string base_dir;                          // set by load()

  int size() const { return static_cast<int>(mesh_paths.size()); }

  static CollectionManifest load(const std::string& path);
  void save(const std::string& path) const;

  TriMesh load_shape(int i) const;
  CorrPairs load_gt(int i) const;
  bool has_gt() const { return !gt_corr_paths.empty(); }

  /// Builds the generator described by the manifest block: sphere /
  /// ellipsoid / capsule_blend parameters, or an MLP weights file reference.
  std::unique_ptr<ImplicitGenerator> make_generator() const;
};

enum class SynthFamily { SphereRadius, EllipsoidAxes, BentCapsule, BumpField };

SynthFamily synth_family_from(const std::string& name);
std::string synth_family_name(SynthFamily family);

/// Generates a synthetic collection under out_dir: meshes obtained by
/// analytically deforming a shared template (so ground-truth correspondences
/// are the vertex-index identity), latent codes, identity ground-truth files,
/// and a generator spec for the pipeline. Deterministic per seed.
CollectionManifest synth_collection(SynthFamily family, int count, uint64_t seed,
                                    const std::string& out_dir);

}  // namespace shapecorr
