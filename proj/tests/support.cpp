#include "support.hpp"

namespace shapecorr::testsupport {

TriMesh jitter_vertices(const TriMesh& mesh, double amplitude, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, amplitude);
  std::vector<Vec3> verts = mesh.vertices();
  for (auto& v : verts) v += Vec3(gauss(rng), gauss(rng), gauss(rng));
  return mesh.with_positions(std::move(verts));
}

TriMesh random_mesh(Rng& rng, int index) {
  TriMesh base;
  switch (index % 4) {
    case 0: base = make_icosphere(1);  // 42 vertices
      break;
    case 1: {
      std::uniform_int_distribution<int> rows(4, 10), cols(5, 14);
      base = make_grid_mesh(rows(rng), cols(rng), 0.35);
      break;
    }
    case 2: base = make_icosphere(2);  // 162 vertices
      break;
    default: {
      std::uniform_int_distribution<int> rows(3, 6), cols(7, 20);
      base = make_grid_mesh(rows(rng), cols(rng), 0.5);
      break;
    }
  }
  return jitter_vertices(base, 0.04, rng);
}

VecX random_field(Rng& rng, int n, double scale) {
  std::normal_distribution<double> gauss(0.0, scale);
  VecX d(n);
  for (int i = 0; i < n; ++i) d[i] = gauss(rng);
  return d;
}

VecX translation_field(const TriMesh& mesh, const Vec3& t) {
  VecX d(3 * mesh.n());
  for (int i = 0; i < mesh.n(); ++i) d.segment<3>(3 * i) = t;
  return d;
}

VecX rigid_field(const TriMesh& mesh, const Vec3& c, const Vec3& t) {
  VecX d(3 * mesh.n());
  for (int i = 0; i < mesh.n(); ++i) d.segment<3>(3 * i) = c.cross(mesh.vertex(i)) + t;
  return d;
}

VecX similarity_field(const TriMesh& mesh, double s, const Vec3& c, const Vec3& t) {
  VecX d(3 * mesh.n());
  for (int i = 0; i < mesh.n(); ++i)
    d.segment<3>(3 * i) = s * mesh.vertex(i) + c.cross(mesh.vertex(i)) + t;
  return d;
}

VecX scaling_field(const TriMesh& mesh, double s) {
  return similarity_field(mesh, s, Vec3::Zero(), Vec3::Zero());
}

BlendGenerator latent8_blob_family(uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<BlendGenerator::Site> sites;
  for (int k = 0; k < 8; ++k) {
    BlendGenerator::Site s;
    Vec3 dir(k & 1 ? 1 : -1, k & 2 ? 1 : -1, k & 4 ? 1 : -1);
    s.center0 = 0.52 * dir.normalized() + 0.03 * Vec3(gauss(rng), gauss(rng), gauss(rng));
    s.center_coeff = MatX::Zero(3, 8);
    s.center_coeff.col(k) = 0.02 * Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
    s.radius0 = 0.5 + 0.02 * gauss(rng);
    s.radius_coeff = VecX::Zero(8);
    s.radius_coeff[k] = 0.18;
    sites.push_back(std::move(s));
  }
  return BlendGenerator(8, std::move(sites), 16.0);
}

VecX dense_constrained_min(const MatX& q, double mu, const MatX& c, const VecX& rhs) {
  const int n = static_cast<int>(q.rows());
  const int m = static_cast<int>(c.rows());
  MatX kkt = MatX::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = q + mu * MatX::Identity(n, n);
  kkt.topRightCorner(n, m) = c.transpose();
  kkt.bottomLeftCorner(m, n) = c;
  VecX full_rhs = VecX::Zero(n + m);
  full_rhs.tail(m) = rhs;
  VecX sol = kkt.completeOrthogonalDecomposition().solve(full_rhs);
  return sol.head(n);
}

}  // namespace shapecorr::testsupport
