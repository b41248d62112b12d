#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "shapecorr/geodesic.hpp"
#include "shapecorr/kdtree.hpp"
#include "shapecorr/mesh_io.hpp"
#include "shapecorr/primitives.hpp"
#include "shapecorr/simplify.hpp"
#include "support.hpp"

using namespace shapecorr;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}
}  // namespace

TEST_CASE("obj: minimal triangle") {
  auto p = temp_file("sc_tri.obj");
  write_file(p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  TriMesh m = load_mesh(p.string());
  CHECK(m.n() == 3);
  CHECK(m.face_count() == 1);
}

TEST_CASE("obj: 0 index is out of range (1-based format)") {
  auto p = temp_file("sc_bad.obj");
  write_file(p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  CHECK_THROWS_AS(load_obj(p.string()), FormatError);
}

TEST_CASE("obj: face with slashes and polygon fan") {
  auto p = temp_file("sc_quad.obj");
  write_file(p, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n");
  TriMesh m = load_mesh(p.string());
  CHECK(m.n() == 4);
  CHECK(m.face_count() == 2);
}

TEST_CASE("ply: ascii unit tetrahedron, adjacency is K4") {
  auto p = temp_file("sc_tet.ply");
  std::string body =
      "ply\nformat ascii 1.0\n"
      "element vertex 4\n"
      "property float x\nproperty float y\nproperty float z\n"
      "element face 4\nproperty list uchar int vertex_indices\n"
      "end_header\n"
      "0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
      "3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";
  write_file(p, body);
  TriMesh m = load_mesh(p.string());
  CHECK(m.n() == 4);
  CHECK(m.face_count() == 4);
  for (int i = 0; i < 4; ++i) CHECK(m.one_ring(i).size() == 3);
}

TEST_CASE("ply binary round-trip is bit exact; obj within 1e-6") {
  Rng rng(7);
  TriMesh m = testsupport::jitter_vertices(make_icosphere(1, 0.83), 0.01, rng);

  auto ply = temp_file("sc_rt.ply");
  save_ply(m, ply.string(), /*binary=*/true);
  TriMesh m2 = load_mesh(ply.string());
  REQUIRE(m2.n() == m.n());
  for (int i = 0; i < m.n(); ++i)
    for (int k = 0; k < 3; ++k) CHECK(m2.vertex(i)[k] == m.vertex(i)[k]);  // bit exact

  auto obj = temp_file("sc_rt.obj");
  save_obj(m, obj.string());
  TriMesh m3 = load_mesh(obj.string());
  REQUIRE(m3.n() == m.n());
  for (int i = 0; i < m.n(); ++i) CHECK((m3.vertex(i) - m.vertex(i)).norm() < 1e-6);
  CHECK(m3.faces() == m.faces());
}

TEST_CASE("one_ring basics") {
  TriMesh tet = make_tetrahedron();
  std::set<int> ring(tet.one_ring(0).begin(), tet.one_ring(0).end());
  CHECK(ring == std::set<int>{1, 2, 3});
  CHECK_THROWS_AS(tet.one_ring(4), std::out_of_range);

  // Isolated vertex: present in the vertex list, unused by faces.
  std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
  TriMesh iso = TriMesh::from_faces(verts, {{0, 1, 2}});
  CHECK(iso.one_ring(3).empty());

  // Interior vertex of a 3x3 grid has 6 neighbors under the diagonal split.
  TriMesh grid = make_grid_mesh(3, 3);
  CHECK(grid.one_ring(4).size() == 6);

  // Symmetry on a jittered sphere.
  TriMesh sph = make_icosphere(1);
  for (int i = 0; i < sph.n(); ++i)
    for (int j : sph.one_ring(i)) {
      const auto& back = sph.one_ring(j);
      CHECK(std::find(back.begin(), back.end(), i) != back.end());
    }
}

TEST_CASE("graph laplacian") {
  // Single edge.
  TriMesh edge = TriMesh::from_edges({{0, 0, 0}, {1, 0, 0}}, {{0, 1}});
  SparseSymMatrix l = graph_laplacian(edge);
  CHECK(l.matrix().coeff(0, 0) == doctest::Approx(1.0));
  CHECK(l.matrix().coeff(0, 1) == doctest::Approx(-1.0));
  CHECK(l.matrix().coeff(1, 1) == doctest::Approx(1.0));

  // Tetrahedron: K4 Laplacian.
  TriMesh tet = make_tetrahedron();
  SparseSymMatrix lt = graph_laplacian(tet);
  for (int i = 0; i < 4; ++i) {
    CHECK(lt.matrix().coeff(i, i) == doctest::Approx(3.0));
    for (int j = 0; j < 4; ++j)
      if (i != j) CHECK(lt.matrix().coeff(i, j) == doctest::Approx(-1.0));
  }

  // Constant vector in the null space for any mesh.
  Rng rng(3);
  for (int trial = 0; trial < 4; ++trial) {
    TriMesh m = testsupport::random_mesh(rng, trial);
    SparseSymMatrix lm = graph_laplacian(m);
    VecX ones = VecX::Ones(m.n());
    CHECK(lm.mult(ones).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(lm.psd_sample_check(rng));
  }
}

TEST_CASE("simplify: below target is identity") {
  TriMesh tet = make_tetrahedron();
  SimplifyResult r = simplify(tet, 10);
  CHECK(r.mesh.face_count() == 4);
  CHECK(r.collapses == 0);
  CHECK(r.reached_target);
}

TEST_CASE("simplify: icosphere 1280 -> 320 stays near the sphere") {
  TriMesh sphere = make_icosphere(3);  // 1280 faces
  REQUIRE(sphere.face_count() == 1280);
  SimplifyResult r = simplify(sphere, 320);
  CHECK(r.reached_target);
  CHECK(r.mesh.face_count() <= 320);
  CHECK(r.mesh.face_count() > 100);
  // All simplified vertices within 2% of the unit radius.
  for (const auto& v : r.mesh.vertices()) CHECK(std::abs(v.norm() - 1.0) < 0.02);
  // Orientation preserved: normals point outward.
  for (int f = 0; f < r.mesh.face_count(); ++f) {
    Vec3 c = (r.mesh.vertex(r.mesh.faces()[f][0]) + r.mesh.vertex(r.mesh.faces()[f][1]) +
              r.mesh.vertex(r.mesh.faces()[f][2])) / 3.0;
    CHECK(r.mesh.face_normal(f).dot(c) > 0.0);
  }
}

TEST_CASE("simplify: never increases face count, valid output") {
  Rng rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    TriMesh m = testsupport::random_mesh(rng, trial);
    int target = std::max(4, m.face_count() / 3);
    SimplifyResult r = simplify(m, target);
    CHECK(r.mesh.face_count() <= m.face_count());
    for (const auto& f : r.mesh.faces()) {
      CHECK(f[0] != f[1]);
      CHECK(f[1] != f[2]);
      CHECK(f[0] != f[2]);
    }
  }
}

TEST_CASE("geodesics") {
  TriMesh path = TriMesh::from_edges({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {{0, 1}, {1, 2}});
  VecX d = geodesic_distances(path, {0});
  CHECK(d[0] == doctest::Approx(0.0));
  CHECK(d[1] == doctest::Approx(1.0));
  CHECK(d[2] == doctest::Approx(2.0));

  CHECK_THROWS_AS(geodesic_distances(path, {}), std::invalid_argument);

  // Icosphere antipodal distance within 15% of pi*r.
  TriMesh sph = make_icosphere(3, 2.0);
  // Vertex 0 and its antipode (minimum dot product).
  int anti = 0;
  double best = 1e9;
  for (int i = 0; i < sph.n(); ++i) {
    double dot = sph.vertex(i).dot(sph.vertex(0));
    if (dot < best) {
      best = dot;
      anti = i;
    }
  }
  VecX ds = geodesic_distances(sph, {0});
  double expected = M_PI * 2.0;
  CHECK(ds[anti] >= expected * 0.99);  // edge graph overestimates
  CHECK(ds[anti] <= expected * 1.15);

  // Unreachable vertices get +inf.
  TriMesh disconnected = TriMesh::from_edges({{0, 0, 0}, {1, 0, 0}, {9, 9, 9}}, {{0, 1}});
  VecX dd = geodesic_distances(disconnected, {0});
  CHECK(std::isinf(dd[2]));
}

TEST_CASE("nearest point: exact, ties to lowest index") {
  std::vector<Vec3> pts = {{0, 0, 0}, {2, 0, 0}};
  auto [i0, d0] = nearest_point_index(pts, {0, 0, 0});
  CHECK(i0 == 0);
  CHECK(d0 == doctest::Approx(0.0));
  auto [it, dt] = nearest_point_index(pts, {1, 0, 0});  // equidistant
  CHECK(it == 0);

  Rng rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec3> cloud(1000);
  for (auto& p : cloud) p = Vec3(gauss(rng), gauss(rng), gauss(rng));
  KdTree tree(cloud);
  for (int q = 0; q < 100; ++q) {
    Vec3 query(gauss(rng), gauss(rng), gauss(rng));
    auto brute = nearest_point_index(cloud, query);
    auto fast = tree.nearest(query);
    CHECK(fast.first == brute.first);
    CHECK(fast.second == doctest::Approx(brute.second));
  }
}

TEST_CASE("correspondence files round trip") {
  CorrPairs pairs = {{0, 3}, {1, 1}, {7, 42}};
  auto txt = temp_file("sc_corr.txt");
  auto bin = temp_file("sc_corr.bin");
  save_correspondences_text(pairs, txt.string());
  save_correspondences_binary(pairs, bin.string());
  CHECK(load_correspondences(txt.string()) == pairs);
  CHECK(load_correspondences(bin.string()) == pairs);
}

TEST_CASE("simplify: reports when the target is unreachable") {
  // A coarse icosphere cannot legally collapse all the way to 4 faces; the
  // result flag must reflect whatever was achievable.
  TriMesh coarse = make_icosphere(0);  // 20 faces
  SimplifyResult r = simplify(coarse, 4);
  CHECK(r.mesh.face_count() >= 4);
  CHECK(r.reached_target == (r.mesh.face_count() <= 4));
  for (const auto& f : r.mesh.faces()) {
    CHECK(f[0] != f[1]);
    CHECK(f[1] != f[2]);
    CHECK(f[0] != f[2]);
  }
}
