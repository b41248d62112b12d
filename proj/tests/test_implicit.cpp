#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "shapecorr/marching_cubes.hpp"
#include "support.hpp"

using namespace shapecorr;
using namespace shapecorr::testsupport;
namespace fs = std::filesystem;

TEST_CASE("sphere generator: values and gradients") {
  SphereGenerator gen = SphereGenerator::radius_family();
  LatentCode z = LatentCode::Constant(1, 1.0);
  CHECK(gen.eval({1, 0, 0}, z) == doctest::Approx(0.0));
  CHECK(gen.eval({2, 0, 0}, z) == doctest::Approx(1.0));
  CHECK((gen.grad_x({1, 0, 0}, z) - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK(gen.grad_z({7, 0, 0}, z)[0] == doctest::Approx(-1.0));

  LatentCode bad = LatentCode::Zero(3);
  CHECK_THROWS_AS(gen.eval({1, 0, 0}, bad), std::invalid_argument);
}

TEST_CASE("translation family: chain rule structure") {
  Vec3 u(0.3, -0.2, 0.9);
  SphereGenerator gen = SphereGenerator::translation_family(u, 1.0);
  LatentCode z = LatentCode::Constant(1, 0.4);
  Rng rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Vec3 x(gauss(rng), gauss(rng), gauss(rng));
    if ((x - z[0] * u).norm() < 1e-3) continue;
    Vec3 gx = gen.grad_x(x, z);
    VecX gz = gen.grad_z(x, z);
    CHECK(gz[0] == doctest::Approx(-gx.dot(u)).epsilon(1e-6));
  }
}

TEST_CASE("gradient consistency across variants") {
  Rng rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::unique_ptr<ImplicitGenerator>> gens;
  gens.push_back(std::make_unique<SphereGenerator>(SphereGenerator::radius_family(2)));
  gens.push_back(std::make_unique<EllipsoidGenerator>(
      EllipsoidGenerator::axes_family({1.0, 0.8, 1.2}, 2)));
  {
    std::vector<BlendGenerator::Site> sites;
    for (int k = 0; k < 3; ++k) {
      BlendGenerator::Site s;
      s.center0 = Vec3(0.4 * k - 0.4, 0, 0);
      s.center_coeff = MatX::Zero(3, 2);
      s.center_coeff(1, 0) = 0.2 * k;
      s.radius0 = 0.5;
      s.radius_coeff = VecX::Zero(2);
      s.radius_coeff[1] = 0.1;
      sites.push_back(s);
    }
    gens.push_back(std::make_unique<BlendGenerator>(2, sites, 8.0));
  }
  gens.push_back(std::make_unique<MlpGenerator>(make_random_mlp(2, {16, 16}, 99)));

  for (const auto& gen : gens) {
    LatentCode z(2);
    z << 0.9, 0.2;
    for (int t = 0; t < 25; ++t) {
      Vec3 x(gauss(rng), gauss(rng), gauss(rng));
      CHECK(gradient_check(*gen, x, z) < 1e-4);
    }
  }
}

TEST_CASE("mlp: roundtrip, golden value, shape validation") {
  MlpGenerator gen = make_random_mlp(2, {16, 16}, 123);
  auto path = (fs::temp_directory_path() / "sc_mlp.json").string();
  save_mlp_weights(gen, path);
  MlpGenerator loaded = load_mlp_weights(path);

  Rng rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);
  LatentCode z(2);
  z << -0.3, 0.8;
  for (int t = 0; t < 100; ++t) {
    Vec3 x(gauss(rng), gauss(rng), gauss(rng));
    CHECK(gen.eval(x, z) == loaded.eval(x, z));  // bit exact
    CHECK(std::isfinite(gen.eval(x, z)));
    CHECK(gen.grad_x(x, z).allFinite());
    CHECK(gen.grad_z(x, z).allFinite());
  }
  // Determinism regression: same seed, same weights, same value.
  MlpGenerator again = make_random_mlp(2, {16, 16}, 123);
  CHECK(again.eval({0.3, -0.1, 0.2}, z) == gen.eval({0.3, -0.1, 0.2}, z));

  // Mismatched layer dimensions must name the layer.
  std::vector<MlpGenerator::Layer> bad(2);
  bad[0].weights = MatX::Zero(8, 5);
  bad[0].bias = VecX::Zero(8);
  bad[1].weights = MatX::Zero(1, 9);  // expects 8 inputs
  bad[1].bias = VecX::Zero(1);
  bad[1].activation = Activation::Identity;
  CHECK_THROWS_WITH_AS(MlpGenerator(2, std::move(bad)),
                       doctest::Contains("layer 1"), std::invalid_argument);
}

TEST_CASE("latent_path: formula, trivial cases, default") {
  LatentCode z0 = LatentCode::Zero(1);
  LatentCode z1 = LatentCode::Constant(1, 11.0);
  auto path = latent_path(z0, z1, 10);
  REQUIRE(path.size() == 10);
  for (int j = 1; j <= 10; ++j) CHECK(path[j - 1][0] == doctest::Approx(j));

  CHECK(latent_path(z0, z1, 0).empty());
  CHECK(kDefaultPathSteps == 10);
  CHECK(kDefaultLevelStep == 1e-3);
  CHECK_THROWS_AS(latent_path(z0, LatentCode::Zero(2), 3), std::invalid_argument);
}

TEST_CASE("marching cubes: unit sphere area, residual bound, watertight") {
  SphereGenerator gen = SphereGenerator::radius_family();
  LatentCode z = LatentCode::Constant(1, 1.0);
  VoxelGrid grid = VoxelGrid::from_box(Vec3(-1.5, -1.5, -1.5), Vec3(1.5, 1.5, 1.5), {32, 32, 32});
  ExtractResult r = marching_cubes(gen, z, grid);
  CHECK(!r.clipped);

  double area = r.mesh.total_area();
  CHECK(area == doctest::Approx(4.0 * M_PI).epsilon(0.03));

  // First-order on-surface bound |f| <= 0.5 h |grad|.
  double h = grid.spacing.maxCoeff();
  for (const auto& v : r.mesh.vertices()) {
    double f = gen.eval(v, z);
    CHECK(std::abs(f) <= 0.5 * h * gen.grad_x(v, z).norm() + 1e-12);
  }

  // Watertight interior surface: every edge borders exactly two faces,
  // traversed once in each direction.
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : r.mesh.faces())
    for (int k = 0; k < 3; ++k) directed[{f[k], f[(k + 1) % 3]}]++;
  for (const auto& [e, count] : directed) {
    CHECK(count == 1);
    CHECK(directed.count({e.second, e.first}) == 1);
  }

  // Outward orientation: positive signed volume.
  double vol6 = 0.0;
  for (const auto& f : r.mesh.faces())
    vol6 += r.mesh.vertex(f[0]).cross(r.mesh.vertex(f[1])).dot(r.mesh.vertex(f[2]));
  CHECK(vol6 / 6.0 == doctest::Approx(4.0 / 3.0 * M_PI).epsilon(0.05));
}

TEST_CASE("marching cubes: saddle-heavy fields stay watertight") {
  // A wavy implicit exercises the ambiguous face cases.
  MlpGenerator wavy = make_random_mlp(1, {12}, 2024);
  LatentCode z = LatentCode::Zero(1);
  VoxelGrid grid = VoxelGrid::from_box(Vec3(-1, -1, -1), Vec3(1, 1, 1), {14, 15, 13});
  // Shift the bias so the zero level set passes through the box.
  double mid = wavy.eval({0, 0, 0}, z);
  auto& layers = wavy.mutable_layers();
  layers.back().bias[0] -= mid;
  ExtractResult r = marching_cubes(wavy, z, grid);
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : r.mesh.faces())
    for (int k = 0; k < 3; ++k) directed[{f[k], f[(k + 1) % 3]}]++;
  for (const auto& [e, count] : directed) {
    CHECK(count == 1);
    if (!r.clipped) CHECK(directed.count({e.second, e.first}) == 1);
  }
}

TEST_CASE("marching cubes: empty surface raises, clipping flagged") {
  SphereGenerator gen = SphereGenerator::radius_family();
  VoxelGrid grid = VoxelGrid::from_box(Vec3(-1, -1, -1), Vec3(1, 1, 1), {8, 8, 8});
  LatentCode none = LatentCode::Constant(1, -1.0);  // f = |x| + 1 > 0
  CHECK_THROWS_AS(marching_cubes(gen, none, grid), EmptySurfaceError);

  LatentCode big = LatentCode::Constant(1, 1.4);  // sphere pokes out of the box
  ExtractResult r = marching_cubes(gen, big, grid);
  CHECK(r.clipped);
}

TEST_CASE("marching cubes: thread count does not change output") {
  SphereGenerator gen = SphereGenerator::radius_family();
  LatentCode z = LatentCode::Constant(1, 1.0);
  VoxelGrid grid = VoxelGrid::from_box(Vec3(-1.3, -1.3, -1.3), Vec3(1.3, 1.3, 1.3), {20, 21, 19});
  ExtractResult a = marching_cubes(gen, z, grid, 1);
  ExtractResult b = marching_cubes(gen, z, grid, 4);
  REQUIRE(a.mesh.n() == b.mesh.n());
  CHECK(a.mesh.faces() == b.mesh.faces());
  for (int i = 0; i < a.mesh.n(); ++i) CHECK(a.mesh.vertex(i) == b.mesh.vertex(i));
}

TEST_CASE("voxel grid validation and defaults") {
  CHECK_THROWS_AS(VoxelGrid(Vec3::Zero(), Vec3(1, 1, 0), {4, 4, 4}), std::invalid_argument);
  CHECK_THROWS_AS(VoxelGrid(Vec3::Zero(), Vec3::Ones(), {1, 4, 4}), std::invalid_argument);
  VoxelGrid g = VoxelGrid::from_box(Vec3(0, 0, 0), Vec3(2, 2, 2), {3, 3, 3});
  CHECK((g.node(2, 0, 0) - Vec3(2, 0, 0)).norm() < 1e-15);
}

TEST_CASE("mlp fit: recovers a sphere SDF well enough to drive constraints") {
  SphereGenerator target = SphereGenerator::radius_family();
  LatentCode z = LatentCode::Constant(1, 1.0);
  Rng rng(7);
  std::normal_distribution<double> gauss(0.0, 0.8);
  std::vector<MlpFitSample> samples;
  for (int i = 0; i < 4000; ++i) {
    Vec3 x(gauss(rng), gauss(rng), gauss(rng));
    samples.push_back({x, z, target.eval(x, z)});
  }
  MlpGenerator gen = make_random_mlp(1, {32, 32}, 5);
  fit_mlp(gen, samples, 800, 1e-2, 17);
  double err = 0.0;
  int count = 0;
  for (int i = 0; i < 200; ++i) {
    Vec3 x(gauss(rng), gauss(rng), gauss(rng));
    if (x.norm() > 1.4 || x.norm() < 0.6) continue;
    err += std::abs(gen.eval(x, z) - target.eval(x, z));
    ++count;
  }
  REQUIRE(count > 20);
  CHECK(err / count < 0.05);  // near the surface the fit is tight
}
