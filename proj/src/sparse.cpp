#include "shapecorr/sparse.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace shapecorr {

SparseSymMatrix SparseSymMatrix::from_triplets(
    int dim, const std::vector<Eigen::Triplet<double>>& triplets) {
  SpMat m(dim, dim);
  m.setFromTriplets(triplets.begin(), triplets.end());  // sums duplicates
  return from_sparse(std::move(m));
}

SparseSymMatrix SparseSymMatrix::from_sparse(SpMat m) {
  SparseSymMatrix out;
  SpMat mt = SpMat(m.transpose());
  double max_abs = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      max_abs = std::max(max_abs, std::abs(it.value()));
  SpMat diff = m - mt;
  double asym = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SpMat::InnerIterator it(diff, k); it; ++it)
      asym = std::max(asym, std::abs(it.value()));
  if (asym > 1e-12 * std::max(1.0, max_abs))
    throw std::invalid_argument("SparseSymMatrix: asymmetric input, max |M - M^T| = " +
                                std::to_string(asym));

  out.mat_ = 0.5 * (m + mt);
  out.mat_.prune(0.0, 0.0);
  out.mat_.makeCompressed();
  return out;
}

double SparseSymMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < mat_.rows(); ++i) t += mat_.coeff(i, i);
  return t;
}

double SparseSymMatrix::inf_norm() const {
  VecX row_sums = VecX::Zero(mat_.rows());
  for (int k = 0; k < mat_.outerSize(); ++k)
    for (SpMat::InnerIterator it(mat_, k); it; ++it)
      row_sums[it.row()] += std::abs(it.value());
  return mat_.rows() ? row_sums.maxCoeff() : 0.0;
}

bool SparseSymMatrix::psd_sample_check(Rng& rng, int trials) const {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    VecX x(dim());
    for (int i = 0; i < dim(); ++i) x[i] = gauss(rng);
    if (quad(x) < -1e-9 * x.squaredNorm()) return false;
  }
  return true;
}

void SparseSymMatrix::save_matrix_market(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  std::vector<Eigen::Triplet<double>> lower;
  for (int k = 0; k < mat_.outerSize(); ++k)
    for (SpMat::InnerIterator it(mat_, k); it; ++it)
      if (it.row() >= it.col()) lower.emplace_back(it.row(), it.col(), it.value());
  out << mat_.rows() << " " << mat_.cols() << " " << lower.size() << "\n";
  out.precision(17);
  for (const auto& t : lower)
    out << t.row() + 1 << " " << t.col() + 1 << " " << t.value() << "\n";
}

}  // namespace shapecorr
