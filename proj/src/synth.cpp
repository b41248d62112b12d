#include "shapecorr/synth.hpp"

#include <filesystem>
#include <fstream>

#include "shapecorr/marching_cubes.hpp"
#include "shapecorr/primitives.hpp"
#include "shapecorr/rng.hpp"
#include "shapecorr/simplify.hpp"

namespace fs = std::filesystem;

namespace shapecorr {

namespace {

nlohmann::ordered_json vec_to_json(const VecX& v) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::ordered_json vec3_to_json(const Vec3& v) {
  return nlohmann::ordered_json::array({v[0], v[1], v[2]});
}

nlohmann::ordered_json mat_to_json(const MatX& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

VecX vec_from_json(const nlohmann::json& a) {
  VecX v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

Vec3 vec3_from_json(const nlohmann::json& a) {
  if (a.size() != 3) throw std::runtime_error("expected a 3-vector");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

MatX mat_from_json(const nlohmann::json& rows) {
  if (rows.empty()) return MatX(0, 0);
  MatX m(rows.size(), rows[0].size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c].get<double>();
  return m;
}

}  // namespace

CollectionManifest CollectionManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  CollectionManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  m.template_index = j.value("template_index", 0);
  m.unit_scale = j.value("unit_scale", 1.0);
  for (const auto& shape : j.at("shapes")) {
    m.mesh_paths.push_back(shape.at("mesh").get<std::string>());
    m.codes.push_back(vec_from_json(shape.at("code")));
    if (shape.contains("gt")) m.gt_corr_paths.push_back(shape["gt"].get<std::string>());
  }
  if (!m.gt_corr_paths.empty() &&
      m.gt_corr_paths.size() != m.mesh_paths.size())
    throw std::runtime_error(path + ": ground truth must cover every shape or none");
  if (j.contains("generator")) m.generator = j["generator"];
  if (m.template_index < 0 || m.template_index >= m.size())
    throw std::runtime_error(path + ": template_index out of range");
  return m;
}

void CollectionManifest::save(const std::string& path) const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["template_index"] = template_index;
  j["unit_scale"] = unit_scale;
  j["shapes"] = nlohmann::ordered_json::array();
  for (int i = 0; i < size(); ++i) {
    nlohmann::ordered_json s;
    s["mesh"] = mesh_paths[i];
    s["code"] = vec_to_json(codes[i]);
    if (!gt_corr_paths.empty()) s["gt"] = gt_corr_paths[i];
    j["shapes"].push_back(s);
  }
  if (!generator.empty()) j["generator"] = generator;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

TriMesh CollectionManifest::load_shape(int i) const {
  return load_mesh((fs::path(base_dir) / mesh_paths[i]).string());
}

CorrPairs CollectionManifest::load_gt(int i) const {
  if (!has_gt()) throw std::runtime_error("manifest has no ground-truth files");
  return load_correspondences((fs::path(base_dir) / gt_corr_paths[i]).string());
}

std::unique_ptr<ImplicitGenerator> CollectionManifest::make_generator() const {
  if (generator.empty())
    throw std::runtime_error("manifest declares no generator spec");
  std::string variant = generator.at("variant").get<std::string>();
  int d = generator.value("latent_dim", codes.empty() ? 0 : int(codes[0].size()));
  if (variant == "sphere") {
    return std::make_unique<SphereGenerator>(
        d, vec3_from_json(generator.at("center0")), mat_from_json(generator.at("center_coeff")),
        generator.at("radius0").get<double>(), vec_from_json(generator.at("radius_coeff")));
  }
  if (variant == "ellipsoid") {
    return std::make_unique<EllipsoidGenerator>(
        d, vec3_from_json(generator.at("center0")), mat_from_json(generator.at("center_coeff")),
        vec3_from_json(generator.at("axes0")), mat_from_json(generator.at("axes_coeff")));
  }
  if (variant == "capsule_blend") {
    std::vector<BlendGenerator::Site> sites;
    for (const auto& js : generator.at("sites")) {
      BlendGenerator::Site s;
      s.center0 = vec3_from_json(js.at("center0"));
      s.center_coeff = mat_from_json(js.at("center_coeff"));
      s.radius0 = js.at("radius0").get<double>();
      s.radius_coeff = vec_from_json(js.at("radius_coeff"));
      sites.push_back(std::move(s));
    }
    return std::make_unique<BlendGenerator>(d, std::move(sites),
                                            generator.at("sharpness").get<double>());
  }
  if (variant == "mlp") {
    return std::make_unique<MlpGenerator>(
        load_mlp_weights((fs::path(base_dir) / generator.at("weights").get<std::string>()).string()));
  }
  throw std::runtime_error("unknown generator variant '" + variant + "'");
}

SynthFamily synth_family_from(const std::string& name) {
  if (name == "sphere-radius") return SynthFamily::SphereRadius;
  if (name == "ellipsoid-axes") return SynthFamily::EllipsoidAxes;
  if (name == "bent-capsule") return SynthFamily::BentCapsule;
  if (name == "bump-field") return SynthFamily::BumpField;
  throw std::invalid_argument("unknown synthetic family '" + name + "'");
}

std::string synth_family_name(SynthFamily family) {
  switch (family) {
    case SynthFamily::SphereRadius: return "sphere-radius";
    case SynthFamily::EllipsoidAxes: return "ellipsoid-axes";
    case SynthFamily::BentCapsule: return "bent-capsule";
    case SynthFamily::BumpField: return "bump-field";
  }
  return "?";
}

namespace {

// Articulated capsule: a static body chain plus an arm chain that rotates
// about the joint. Rodrigues' formula makes a rigid rotation exactly affine
// in z = (sin t, 1 - cos t), so the rotating arm fits the affine-site blend:
//   c(z) = c0 + z1 (axis x r) + z2 (axis x (axis x r)),  r = c0 - joint.
constexpr double kCapsuleJointX = 0.1;

const Vec3 kCapsuleJoint(kCapsuleJointX, 0, 0);

nlohmann::ordered_json capsule_generator_spec() {
  nlohmann::ordered_json g;
  g["variant"] = "capsule_blend";
  g["latent_dim"] = 2;
  g["sharpness"] = 10.0;
  g["sites"] = nlohmann::ordered_json::array();
  const Vec3 axis(0, 0, 1);
  auto add_site = [&](const Vec3& center, double radius, bool on_arm) {
    nlohmann::ordered_json site;
    site["center0"] = vec3_to_json(center);
    MatX coeff = MatX::Zero(3, 2);
    if (on_arm) {
      Vec3 r = center - kCapsuleJoint;
      coeff.col(0) = axis.cross(r);
      coeff.col(1) = axis.cross(axis.cross(r));
    }
    site["center_coeff"] = mat_to_json(coeff);
    site["radius0"] = radius;
    site["radius_coeff"] = vec_to_json(VecX::Zero(2));
    g["sites"].push_back(site);
  };
  for (double s : {-0.85, -0.5, -0.15}) add_site(Vec3(s, 0, 0), 0.3, false);
  for (double s : {0.25, 0.55, 0.85, 1.1}) add_site(Vec3(s, 0, 0), 0.28, true);
  return g;
}

// Mesh-side deformation of the same family: rotate by the full angle on the
// arm, fading smoothly to zero across the joint.
Vec3 articulated_bend(const Vec3& v, double theta) {
  double mask = 1.0 / (1.0 + std::exp(-(v[0] - kCapsuleJointX) / 0.12));
  double a = mask * theta;
  Vec3 r = v - kCapsuleJoint;
  Vec3 axis(0, 0, 1);
  Vec3 rot = r + std::sin(a) * axis.cross(r) + (1.0 - std::cos(a)) * axis.cross(axis.cross(r));
  return kCapsuleJoint + rot;
}

constexpr int kBumpSites = 6;

const Vec3 kBumpDirs[kBumpSites] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                    {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

Vec3 bump_deform(const Vec3& v, const VecX& z) {
  double r = v.norm();
  if (r < 1e-12) return v;
  Vec3 dir = v / r;
  double factor = 1.0;
  for (int k = 0; k < kBumpSites; ++k)
    factor += z[k] * std::exp((dir.dot(kBumpDirs[k]) - 1.0) / 0.15);
  return v * factor;
}

nlohmann::ordered_json bump_generator_spec() {
  nlohmann::ordered_json g;
  g["variant"] = "capsule_blend";
  g["latent_dim"] = kBumpSites;
  g["sharpness"] = 14.0;
  g["sites"] = nlohmann::ordered_json::array();
  nlohmann::ordered_json central;
  central["center0"] = vec3_to_json(Vec3::Zero());
  central["center_coeff"] = mat_to_json(MatX::Zero(3, kBumpSites));
  central["radius0"] = 1.0;
  central["radius_coeff"] = vec_to_json(VecX::Zero(kBumpSites));
  g["sites"].push_back(central);
  for (int k = 0; k < kBumpSites; ++k) {
    nlohmann::ordered_json site;
    site["center0"] = vec3_to_json(0.9 * kBumpDirs[k]);
    site["center_coeff"] = mat_to_json(MatX::Zero(3, kBumpSites));
    site["radius0"] = 0.1;
    VecX rc = VecX::Zero(kBumpSites);
    rc[k] = 0.9;
    site["radius_coeff"] = vec_to_json(rc);
    g["sites"].push_back(site);
  }
  return g;
}

}  // namespace

CollectionManifest synth_collection(SynthFamily family, int count, uint64_t seed,
                                    const std::string& out_dir) {
  if (count < 2) throw std::invalid_argument("synth_collection: count must be >= 2");
  fs::create_directories(out_dir);
  Rng rng(derive_seed(seed, 0xC0DE));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  CollectionManifest manifest;
  manifest.base_dir = out_dir;
  manifest.template_index = 0;
  manifest.unit_scale = 1.0;

  TriMesh tmpl;
  std::vector<LatentCode> codes(count);
  switch (family) {
    case SynthFamily::SphereRadius: {
      tmpl = make_icosphere(3);
      for (int i = 0; i < count; ++i) {
        double t = count > 1 ? double(i) / (count - 1) : 0.0;
        codes[i] = LatentCode::Constant(1, 1.0 + 0.5 * t + 0.02 * unit(rng));
      }
      nlohmann::ordered_json g;
      g["variant"] = "sphere";
      g["latent_dim"] = 1;
      g["center0"] = vec3_to_json(Vec3::Zero());
      g["center_coeff"] = mat_to_json(MatX::Zero(3, 1));
      g["radius0"] = 0.0;
      g["radius_coeff"] = vec_to_json(VecX::Ones(1));
      manifest.generator = g;
      break;
    }
    case SynthFamily::EllipsoidAxes: {
      tmpl = make_icosphere(3);
      for (int i = 0; i < count; ++i) {
        double t = count > 1 ? double(i) / (count - 1) : 0.0;
        Vec3 axes = Vec3(1, 1, 1) + t * Vec3(0.35, -0.2, 0.18) +
                    0.02 * Vec3(unit(rng), unit(rng), unit(rng));
        codes[i] = LatentCode(3);
        codes[i] << axes[0], axes[1], axes[2];
      }
      nlohmann::ordered_json g;
      g["variant"] = "ellipsoid";
      g["latent_dim"] = 3;
      g["center0"] = vec3_to_json(Vec3::Zero());
      g["center_coeff"] = mat_to_json(MatX::Zero(3, 3));
      g["axes0"] = vec3_to_json(Vec3::Zero());
      g["axes_coeff"] = mat_to_json(MatX::Identity(3, 3));
      manifest.generator = g;
      break;
    }
    case SynthFamily::BentCapsule: {
      manifest.generator = capsule_generator_spec();
      CollectionManifest probe = manifest;
      probe.codes = {LatentCode::Zero(2)};
      auto gen = probe.make_generator();
      VoxelGrid grid = VoxelGrid::from_box(Vec3(-1.5, -1.0, -0.65), Vec3(1.6, 1.7, 0.65),
                                           {48, 42, 22});
      tmpl = simplify(marching_cubes(*gen, LatentCode::Zero(2), grid).mesh, 2000).mesh;
      for (int i = 0; i < count; ++i) {
        double t = count > 1 ? double(i) / (count - 1) : 0.0;
        double theta = 2.2 * t + 0.03 * unit(rng);
        codes[i] = LatentCode(2);
        codes[i] << std::sin(theta), 1.0 - std::cos(theta);
      }
      break;
    }
    case SynthFamily::BumpField: {
      manifest.generator = bump_generator_spec();
      tmpl = make_icosphere(3);
      for (int i = 0; i < count; ++i) {
        double t = count > 1 ? double(i) / (count - 1) : 0.0;
        codes[i] = LatentCode(kBumpSites);
        for (int k = 0; k < kBumpSites; ++k)
          codes[i][k] = 0.22 * t * ((k % 2) ? 1.0 : 0.7) + 0.01 * unit(rng);
      }
      break;
    }
  }

  manifest.codes = codes;
  for (int i = 0; i < count; ++i) {
    std::vector<Vec3> verts = tmpl.vertices();
    switch (family) {
      case SynthFamily::SphereRadius:
        for (auto& v : verts) v *= codes[i][0];
        break;
      case SynthFamily::EllipsoidAxes:
        for (auto& v : verts)
          v = Vec3(codes[i][0] * v[0], codes[i][1] * v[1], codes[i][2] * v[2]);
        break;
      case SynthFamily::BentCapsule: {
        double theta = std::atan2(codes[i][0], 1.0 - codes[i][1]);
        for (auto& v : verts) v = articulated_bend(v, theta);
        break;
      }
      case SynthFamily::BumpField:
        for (auto& v : verts) v = bump_deform(v, codes[i]);
        break;
    }
    TriMesh shape = tmpl.with_positions(std::move(verts));
    char name[64];
    std::snprintf(name, sizeof(name), "shape_%03d.ply", i);
    save_ply(shape, (fs::path(out_dir) / name).string(), /*binary=*/true);
    manifest.mesh_paths.push_back(name);

    CorrPairs identity;
    identity.reserve(tmpl.n());
    for (int v = 0; v < tmpl.n(); ++v) identity.emplace_back(v, v);
    std::snprintf(name, sizeof(name), "gt_%03d.corr", i);
    save_correspondences_binary(identity, (fs::path(out_dir) / name).string());
    manifest.gt_corr_paths.push_back(name);
  }

  manifest.save((fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace shapecorr
