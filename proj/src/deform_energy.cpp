#include "shapecorr/deform_energy.hpp"

#include <Eigen/Eigenvalues>
#include <stdexcept>

namespace shapecorr {

namespace {

Mat3 skew(const Vec3& e) {
  Mat3 s;
  s << 0, -e[2], e[1],
       e[2], 0, -e[0],
       -e[1], e[0], 0;
  return s;
}

// Inverse through the eigendecomposition; near-singular systems (flat or
// collinear 1-rings) get a 1e-9 trace-scaled identity before inversion.
template <int K>
Eigen::Matrix<double, K, K> ring_inverse(const Eigen::Matrix<double, K, K>& a,
                                         bool& regularized) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, K, K>> es(a);
  const auto& lam = es.eigenvalues();
  double delta = 0.0;
  if (lam.minCoeff() <= 1e-9 * a.trace()) {
    delta = 1e-9 * a.trace();
    regularized = true;
  }
  Eigen::Matrix<double, K, K> inv = Eigen::Matrix<double, K, K>::Zero();
  for (int k = 0; k < K; ++k)
    inv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() /
           (lam[k] + delta);
  return inv;
}

template <int K>
Eigen::Matrix<double, K, K> ring_pinv(const Eigen::Matrix<double, K, K>& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, K, K>> es(a);
  const auto& lam = es.eigenvalues();
  double cutoff = 1e-12 * std::max(lam.maxCoeff(), 0.0);
  Eigen::Matrix<double, K, K> inv = Eigen::Matrix<double, K, K>::Zero();
  for (int k = 0; k < K; ++k)
    if (lam[k] > cutoff)
      inv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / lam[k];
  return inv;
}

// K = 3 selects the rotation-only (ARAP) local model, K = 4 the
// scale+rotation (ACAP) one. The local matrix M maps the stacked
// displacements of {i} u N_i to the right-hand side b of the local normal
// equations; eliminating the local variable turns the directed-edge Laplacian
// 2 L (x) I_3 into 2 L (x) I_3 - sum_i M_i^T A_i^{-1} M_i.
template <int K>
DeformQuadForm build_form(const TriMesh& mesh, DeformKind kind) {
  const int n = mesh.n();
  std::vector<Eigen::Triplet<double>> trip;
  DeformQuadForm out;
  out.kind = kind;

  auto add_block = [&](int bi, int bj, const Mat3& blk) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (blk(r, c) != 0.0) trip.emplace_back(3 * bi + r, 3 * bj + c, blk(r, c));
  };

  for (int i = 0; i < n; ++i) {
    const auto& ring = mesh.one_ring(i);
    if (ring.empty()) {
      out.isolated_vertices.push_back(i);
      continue;
    }
    const int v = static_cast<int>(ring.size());

    // Laplacian part of the directed sum over j in N_i.
    add_block(i, i, 2.0 * v * Mat3::Identity());
    for (int j : ring) add_block(i, j, -2.0 * Mat3::Identity());

    Eigen::Matrix<double, K, K> a = Eigen::Matrix<double, K, K>::Zero();
    Eigen::Matrix<double, K, Eigen::Dynamic> m(K, 3 * (v + 1));
    m.setZero();
    for (int c = 0; c < v; ++c) {
      Vec3 e = mesh.vertex(i) - mesh.vertex(ring[c]);
      Mat3 ex = skew(e);
      Eigen::Matrix<double, K, 3> col;
      if constexpr (K == 3) {
        col = ex;
        a += e.squaredNorm() * Mat3::Identity() - e * e.transpose();
      } else {
        col.template topRows<1>() = e.transpose();
        col.template bottomRows<3>() = ex;
        Eigen::Matrix4d ai = e.squaredNorm() * Eigen::Matrix4d::Identity();
        ai.bottomRightCorner<3, 3>() -= e * e.transpose();
        a += ai;
      }
      m.template block<K, 3>(0, 0) += col;        // coefficient of d_i
      m.template block<K, 3>(0, 3 * (c + 1)) = -col;  // coefficient of d_j
    }

    bool regularized = false;
    Eigen::Matrix<double, K, K> ainv = ring_inverse<K>(a, regularized);
    if (regularized) out.regularized_rings.push_back(i);

    Eigen::MatrixXd w = m.transpose() * ainv * m;  // 3(v+1) square
    for (int p = 0; p <= v; ++p) {
      int vp = p == 0 ? i : ring[p - 1];
      for (int q = 0; q <= v; ++q) {
        int vq = q == 0 ? i : ring[q - 1];
        add_block(vp, vq, -w.block<3, 3>(3 * p, 3 * q));
      }
    }
  }

  out.matrix = SparseSymMatrix::from_triplets(3 * n, trip);
  return out;
}

template <int K>
double energy_oracle(const TriMesh& mesh, const VecX& d) {
  if (d.size() != 3 * mesh.n())
    throw std::invalid_argument("energy oracle: field must have length 3n");
  double total = 0.0;
  for (int i = 0; i < mesh.n(); ++i) {
    const auto& ring = mesh.one_ring(i);
    if (ring.empty()) continue;
    Eigen::Matrix<double, K, K> a = Eigen::Matrix<double, K, K>::Zero();
    Eigen::Matrix<double, K, 1> b = Eigen::Matrix<double, K, 1>::Zero();
    double lap = 0.0;
    for (int j : ring) {
      Vec3 e = mesh.vertex(i) - mesh.vertex(j);
      Vec3 delta = d.segment<3>(3 * i) - d.segment<3>(3 * j);
      lap += delta.squaredNorm();
      if constexpr (K == 3) {
        a += e.squaredNorm() * Mat3::Identity() - e * e.transpose();
        b += e.cross(delta);
      } else {
        Eigen::Matrix4d ai = e.squaredNorm() * Eigen::Matrix4d::Identity();
        ai.bottomRightCorner<3, 3>() -= e * e.transpose();
        a += ai;
        b[0] += e.dot(delta);
        b.template tail<3>() += e.cross(delta);
      }
    }
    total += lap - b.dot(ring_pinv<K>(a) * b);
  }
  return total;
}

}  // namespace

DeformQuadForm build_arap(const TriMesh& mesh) { return build_form<3>(mesh, DeformKind::Arap); }

DeformQuadForm build_acap(const TriMesh& mesh) { return build_form<4>(mesh, DeformKind::Acap); }

DeformQuadForm build_combined(const TriMesh& mesh, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("build_combined: alpha must be >= 0");
  DeformQuadForm arap = build_arap(mesh);
  DeformQuadForm acap = build_acap(mesh);
  DeformQuadForm out;
  out.kind = DeformKind::Combined;
  out.alpha = alpha;
  out.isolated_vertices = std::move(acap.isolated_vertices);
  out.regularized_rings = std::move(acap.regularized_rings);
  SpMat combined = alpha * arap.matrix.matrix() + acap.matrix.matrix();
  out.matrix = SparseSymMatrix::from_sparse(std::move(combined));
  return out;
}

double arap_energy_oracle(const TriMesh& mesh, const VecX& d) {
  return energy_oracle<3>(mesh, d);
}

double acap_energy_oracle(const TriMesh& mesh, const VecX& d) {
  return energy_oracle<4>(mesh, d);
}

}  // namespace shapecorr
