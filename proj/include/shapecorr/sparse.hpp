#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "shapecorr/rng.hpp"

namespace shapecorr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Sparse symmetric matrix. Construction symmetrizes the assembled triplets
/// and rejects inputs whose asymmetry exceeds 1e-12 (absolute, scaled by the
/// largest entry for matrices far from unit scale).
class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;

  static SparseSymMatrix from_triplets(int dim,
                                       const std::vector<Eigen::Triplet<double>>& triplets);
  static SparseSymMatrix from_sparse(SpMat m);

  int dim() const { return static_cast<int>(mat_.rows()); }
  const SpMat& matrix() const { return mat_; }

  double quad(const VecX& x) const { return x.dot(mat_ * x); }
  VecX mult(const VecX& x) const { return mat_ * x; }

  double trace() const;
  double inf_norm() const;

  /// Sampled PSD check: x^T M x >= -1e-9 ||x||^2 for `trials` random x.
  bool psd_sample_check(Rng& rng, int trials = 20) const;

  /// Matrix Market coordinate format (general symmetric entries, 1-based).
  void save_matrix_market(const std::string& path) const;

 private:
  SpMat mat_;
};

}  // namespace shapecorr
