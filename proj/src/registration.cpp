#include "shapecorr/registration.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>

#include "shapecorr/simplify.hpp"

namespace shapecorr {

namespace {

// Closest point on a single triangle (Ericson, Real-Time Collision Detection).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

ClosestPointQuery::ClosestPointQuery(const TriMesh& mesh)
    : mesh_(mesh), tree_(mesh.vertices()) {
  vertex_faces_.assign(mesh.n(), {});
  for (int f = 0; f < mesh.face_count(); ++f)
    for (int k = 0; k < 3; ++k) vertex_faces_[mesh.faces()[f][k]].push_back(f);
}

ClosestPointQuery::Hit ClosestPointQuery::operator()(const Vec3& query) const {
  auto [vi, vd2] = tree_.nearest(query);
  Hit hit{mesh_.vertex(vi), vd2, vi};
  auto consider_faces_of = [&](int v) {
    for (int f : vertex_faces_[v]) {
      const auto& tri = mesh_.faces()[f];
      Vec3 p = closest_on_triangle(query, mesh_.vertex(tri[0]), mesh_.vertex(tri[1]),
                                   mesh_.vertex(tri[2]));
      double d2 = (p - query).squaredNorm();
      if (d2 < hit.squared_distance) {
        hit.squared_distance = d2;
        hit.point = p;
      }
    }
  };
  consider_faces_of(vi);
  for (int nb : mesh_.one_ring(vi)) consider_faces_of(nb);
  return hit;
}

RegistrationResult register_arap(const TriMesh& source, const TriMesh& target,
                                 const RegistrationConfig& config) {
  const int n = source.n();
  if (n == 0 || target.n() == 0)
    throw std::invalid_argument("register_arap: empty source or target");
  {
    // Require overlapping bounding boxes (intersection volume > 0).
    Vec3 lo = source.bbox_min().cwiseMax(target.bbox_min());
    Vec3 hi = source.bbox_max().cwiseMin(target.bbox_max());
    if ((hi - lo).minCoeff() <= 0.0)
      throw std::invalid_argument("register_arap: source and target do not overlap");
  }
  const double w = config.data_weight;

  // Global-step system 2L + w I, factored once.
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, 2.0 * source.one_ring(i).size() + w);
    for (int j : source.one_ring(i)) trip.emplace_back(i, j, -2.0);
  }
  SpMat system(n, n);
  system.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SpMat> solver(system);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("register_arap: global system factorization failed");

  ClosestPointQuery closest(target);

  // Area-weighted target vertex normals, used by the point-to-plane option.
  std::vector<Vec3> target_normals;
  if (config.point_to_plane) {
    target_normals.assign(target.n(), Vec3::Zero());
    for (int f = 0; f < target.face_count(); ++f) {
      Vec3 nrm = target.face_normal(f);
      for (int k = 0; k < 3; ++k) target_normals[target.faces()[f][k]] += nrm;
    }
    for (auto& nrm : target_normals) {
      double len = nrm.norm();
      if (len > 1e-300) nrm /= len;
    }
  }

  std::vector<Vec3> positions = source.vertices();
  std::vector<Mat3> rotations(n, Mat3::Identity());
  std::vector<Vec3> targets(n);
  std::vector<Vec3> normals(n, Vec3::Zero());

  auto update_correspondences = [&]() {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      auto hit = closest(positions[i]);
      targets[i] = hit.point;
      sum += hit.squared_distance;
      if (config.point_to_plane) normals[i] = target_normals[hit.nearest_vertex];
    }
    return sum / n;
  };

  auto local_step = [&]() {
    double energy = 0.0;
    for (int i = 0; i < n; ++i) {
      Mat3 cov = Mat3::Zero();
      for (int j : source.one_ring(i))
        cov += (source.vertex(i) - source.vertex(j)) *
               (positions[i] - positions[j]).transpose();
      Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Mat3 r = svd.matrixV() * svd.matrixU().transpose();
      if (r.determinant() < 0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixV() * flip * svd.matrixU().transpose();
      }
      rotations[i] = r;
      for (int j : source.one_ring(i))
        energy += ((positions[i] - positions[j]) -
                   r * (source.vertex(i) - source.vertex(j))).squaredNorm();
    }
    return energy;
  };

  auto global_step = [&]() {
    MatX rhs(n, 3);
    for (int i = 0; i < n; ++i) {
      Vec3 acc = Vec3::Zero();
      for (int j : source.one_ring(i))
        acc += (rotations[i] + rotations[j]) * (source.vertex(i) - source.vertex(j));
      Vec3 t = targets[i];
      if (config.point_to_plane && normals[i].squaredNorm() > 0.5)
        t = positions[i] - normals[i] * normals[i].dot(positions[i] - targets[i]);
      rhs.row(i) = (acc + w * t).transpose();
    }
    MatX sol = solver.solve(rhs);
    for (int i = 0; i < n; ++i) positions[i] = sol.row(i).transpose();
  };

  RegistrationResult result;
  double prev_total = std::numeric_limits<double>::infinity();
  double best_total = prev_total;
  std::vector<Vec3> best_positions = positions;
  int rises = 0;
  int iter = 0;
  double data = 0.0, arap = 0.0;
  for (; iter < config.max_outer_iterations; ++iter) {
    data = update_correspondences();
    arap = local_step();
    double total = arap + w * data * n;
    if (total < best_total) {
      best_total = total;
      best_positions = positions;
    }
    if (total > prev_total + 1e-12 * std::max(1.0, prev_total)) {
      if (++rises >= 5) {
        result.diverged = true;
        positions = best_positions;
        break;
      }
    } else {
      rises = 0;
    }
    bool converged =
        std::isfinite(prev_total) &&
        std::abs(prev_total - total) <= config.tolerance * std::max(1.0, prev_total);
    prev_total = total;
    if (converged) break;
    global_step();
  }

  result.deformed = source.with_positions(positions);
  // Final measurements at the returned positions.
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += closest(positions[i]).squared_distance;
  result.data_residual = sum / n;
  result.arap_energy = local_step();
  result.iterations = iter;
  return result;
}

PathRegistrationResult register_along_path(const TriMesh& template_mesh,
                                           const ImplicitGenerator& gen,
                                           const LatentCode& z_temp,
                                           const LatentCode& z_target, int T,
                                           const VoxelGrid& grid, int simplify_target,
                                           const RegistrationConfig& config) {
  std::vector<LatentCode> codes = latent_path(z_temp, z_target, T);
  codes.push_back(z_target);

  PathRegistrationResult out;
  TriMesh current = template_mesh;
  RegistrationResult last;
  for (size_t step = 0; step < codes.size(); ++step) {
    TriMesh level;
    try {
      level = simplify(marching_cubes(gen, codes[step], grid).mesh, simplify_target).mesh;
    } catch (const EmptySurfaceError& e) {
      throw EmptySurfaceError("register_along_path: step " + std::to_string(step) + ": " +
                              e.what());
    }
    last = register_arap(current, level, config);
    out.step_residuals.push_back(last.data_residual);
    out.any_divergence = out.any_divergence || last.diverged;
    current = last.deformed;
  }
  last.deformed = std::move(current);
  out.result = std::move(last);
  return out;
}

double edge_distortion(const std::vector<Vec3>& mapped_positions, const TriMesh& source,
                       int* skipped_edges) {
  if (static_cast<int>(mapped_positions.size()) != source.n())
    throw std::invalid_argument("edge_distortion: mapped positions must cover every vertex");
  int skipped = 0;
  double sum = 0.0;
  long counted = 0;
  for (const auto& e : source.edges()) {
    double len = (source.vertex(e[0]) - source.vertex(e[1])).norm();
    if (len < 1e-300) {
      ++skipped;
      continue;
    }
    double mapped = (mapped_positions[e[0]] - mapped_positions[e[1]]).norm();
    double stretch = (mapped - len) / len;
    sum += stretch * stretch;
    ++counted;
  }
  if (skipped_edges) *skipped_edges = skipped;
  return counted ? sum / counted : 0.0;
}

}  // namespace shapecorr
