#include "shapecorr/induced.hpp"

#include <cmath>

#include "shapecorr/rng.hpp"
#include "shapecorr/simplify.hpp"

namespace shapecorr {

ConstraintSystem build_constraints(const ImplicitGenerator& gen, const TriMesh& mesh,
                                   const LatentCode& z) {
  ConstraintSystem cs;
  cs.vertex_count = mesh.n();
  cs.z = z;
  const int d = gen.latent_dim();

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<VecX> f_rows;
  for (int i = 0; i < mesh.n(); ++i) {
    Vec3 gx = gen.grad_x(mesh.vertex(i), z);
    if (gx.norm() < 1e-8) {
      cs.dropped.push_back(i);
      continue;
    }
    int row = static_cast<int>(cs.kept.size());
    cs.kept.push_back(i);
    for (int a = 0; a < 3; ++a) trip.emplace_back(row, 3 * i + a, gx[a]);
    f_rows.push_back(gen.grad_z(mesh.vertex(i), z));
  }
  if (cs.kept.empty())
    throw std::runtime_error("build_constraints: all vertices have degenerate gradients");

  cs.C.resize(cs.rows(), 3 * mesh.n());
  cs.C.setFromTriplets(trip.begin(), trip.end());
  cs.C.makeCompressed();
  cs.F.resize(cs.rows(), d);
  for (int r = 0; r < cs.rows(); ++r) cs.F.row(r) = f_rows[r];
  return cs;
}

double default_mu(const DeformQuadForm& form) {
  return 1e-6 * form.matrix.trace() / form.matrix.dim();
}

InducedSolver::InducedSolver(const DeformQuadForm& form, ConstraintSystem cs, double mu)
    : form_(form), cs_(std::move(cs)), mu_(mu), n3_(form.matrix.dim()) {
  if (mu_ < 0.0) throw std::invalid_argument("InducedSolver: mu must be >= 0");
  if (cs_.C.cols() != n3_)
    throw std::invalid_argument("InducedSolver: constraint/form size mismatch");
  const int nc = cs_.rows();
  const int dim = n3_ + nc;

  std::vector<Eigen::Triplet<double>> trip;
  const SpMat& l = form_.matrix.matrix();
  for (int k = 0; k < l.outerSize(); ++k)
    for (SpMat::InnerIterator it(l, k); it; ++it)
      trip.emplace_back(it.row(), it.col(), it.value());
  if (mu_ > 0.0)
    for (int i = 0; i < n3_; ++i) trip.emplace_back(i, i, mu_);
  for (int k = 0; k < cs_.C.outerSize(); ++k)
    for (SpMat::InnerIterator it(cs_.C, k); it; ++it) {
      trip.emplace_back(n3_ + it.row(), it.col(), it.value());
      trip.emplace_back(it.col(), n3_ + it.row(), it.value());
    }
  kkt_.resize(dim, dim);
  kkt_.setFromTriplets(trip.begin(), trip.end());
  kkt_.makeCompressed();

  lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
  lu_->compute(kkt_);
  if (lu_->info() != Eigen::Success) {
    // Singular KKT (e.g. a rotating sphere at mu = 0): minimum-norm least
    // squares through a dense rank-revealing factorization.
    lu_.reset();
    fallback_.emplace(MatX(kkt_));
  }
}

VecX InducedSolver::kkt_solve(const VecX& rhs_constraints) const {
  VecX rhs = VecX::Zero(kkt_.rows());
  rhs.tail(cs_.rows()) = rhs_constraints;
  VecX sol = lu_ ? VecX(lu_->solve(rhs)) : VecX(fallback_->solve(rhs));
  if (!sol.allFinite()) throw std::runtime_error("KKT solve produced non-finite values");
  return sol;
}

CorrespondenceField InducedSolver::solve_displacement(const VecX& v, double epsilon) const {
  if (epsilon <= 0.0) throw std::invalid_argument("solve_displacement: epsilon must be > 0");
  if (v.size() != cs_.F.cols())
    throw std::invalid_argument("solve_displacement: latent direction dimension mismatch");
  if (!v.allFinite()) throw std::invalid_argument("solve_displacement: non-finite direction");

  VecX sol = kkt_solve(-epsilon * (cs_.F * v));
  CorrespondenceField field;
  field.d = sol.head(n3_);
  field.v = v;
  field.epsilon = epsilon;

  VecX lambda = sol.tail(cs_.rows());
  SolveDiagnostics& diag = field.diagnostics;
  diag.mu = mu_;
  diag.dropped_constraints = static_cast<int>(cs_.dropped.size());
  diag.minimum_norm_fallback = fallback_.has_value();
  diag.constraint_residual_inf =
      (cs_.C * field.d + epsilon * (cs_.F * v)).lpNorm<Eigen::Infinity>();
  VecX stationarity = form_.matrix.mult(field.d) + mu_ * field.d +
                      cs_.C.transpose() * lambda;
  diag.kkt_residual_inf = stationarity.lpNorm<Eigen::Infinity>();
  diag.energy = form_.matrix.quad(field.d);
  diag.objective = diag.energy + mu_ * field.d.squaredNorm();
  return field;
}

TransferOperator InducedSolver::transfer_operator() const {
  const int d = static_cast<int>(cs_.F.cols());
  TransferOperator op;
  op.G.resize(n3_, d);
  for (int k = 0; k < d; ++k) {
    // d^{e_k} with eps = 1 equals -G e_k.
    VecX sol = kkt_solve(-cs_.F.col(k));
    op.G.col(k) = -sol.head(n3_);
  }
  return op;
}

double InducedSolver::trace_quadratic(TraceMode mode, int probes, uint64_t seed) const {
  const int d = static_cast<int>(cs_.F.cols());
  // The form is PSD, so each solve energy is clamped at zero to keep roundoff
  // from leaking a negative trace.
  if (mode == TraceMode::Exact) {
    double trace = 0.0;
    for (int k = 0; k < d; ++k) {
      VecX sol = kkt_solve(-cs_.F.col(k));
      trace += std::max(0.0, form_.matrix.quad(sol.head(n3_)));
    }
    return trace;
  }
  if (probes <= 0) throw std::invalid_argument("trace_quadratic: probes must be > 0");
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  double sum = 0.0;
  for (int p = 0; p < probes; ++p) {
    VecX w(d);
    for (int k = 0; k < d; ++k) w[k] = coin(rng) ? 1.0 : -1.0;
    VecX sol = kkt_solve(-(cs_.F * w));
    sum += std::max(0.0, form_.matrix.quad(sol.head(n3_)));
  }
  return sum / probes;
}

double InducedSolver::r_geo(TraceMode mode, int probes, uint64_t seed) const {
  const int d = static_cast<int>(cs_.F.cols());
  return unit_ball_volume(d) / d * trace_quadratic(mode, probes, seed);
}

CorrespondenceField solve_displacement(const DeformQuadForm& form, const ConstraintSystem& cs,
                                       const VecX& v, double epsilon, double mu) {
  return InducedSolver(form, cs, mu).solve_displacement(v, epsilon);
}

TransferOperator transfer_operator(const DeformQuadForm& form, const ConstraintSystem& cs,
                                   double mu) {
  return InducedSolver(form, cs, mu).transfer_operator();
}

double r_geo(const DeformQuadForm& form, const ConstraintSystem& cs, double mu, TraceMode mode,
             int probes, uint64_t seed) {
  return InducedSolver(form, cs, mu).r_geo(mode, probes, seed);
}

double unit_ball_volume(int dim) {
  return std::pow(M_PI, dim / 2.0) / std::tgamma(dim / 2.0 + 1.0);
}

double cycle_residual(const ImplicitGenerator& gen, const LatentCode& z, int basis_index,
                      double eps_cyc, const VoxelGrid& grid, int simplify_target, double alpha,
                      double mu) {
  if (eps_cyc <= 0.0) throw std::invalid_argument("cycle_residual: eps_cyc must be > 0");
  if (basis_index < 0 || basis_index >= gen.latent_dim())
    throw std::invalid_argument("cycle_residual: basis index out of range");

  TriMesh mesh = simplify(marching_cubes(gen, z, grid).mesh, simplify_target).mesh;

  DeformQuadForm form = build_combined(mesh, alpha);
  double mu_used = mu >= 0.0 ? mu : default_mu(form);
  InducedSolver solver(form, build_constraints(gen, mesh, z), mu_used);
  MatX g0 = solver.transfer_operator().G;

  VecX v = VecX::Zero(gen.latent_dim());
  v[basis_index] = 1.0;
  VecX d = -eps_cyc * (g0 * v);
  TriMesh advected = mesh.with_positions(mesh.stacked_positions() + d);
  LatentCode z2 = z + eps_cyc * v;

  DeformQuadForm form2 = build_combined(advected, alpha);
  ConstraintSystem cs2 = build_constraints(gen, advected, z2);
  if (cs2.rows() != solver.constraints().rows())
    throw std::runtime_error(
        "cycle_residual: perturbed constraint system dropped different vertices");
  InducedSolver solver2(form2, std::move(cs2), mu >= 0.0 ? mu : default_mu(form2));
  MatX g1 = solver2.transfer_operator().G;

  return (g1 - g0).squaredNorm() / eps_cyc;
}

AdvectResult advect(const ImplicitGenerator& gen, const TriMesh& mesh, const LatentCode& z,
                    const VecX& v, double epsilon, double alpha, double mu, int newton_steps) {
  DeformQuadForm form = build_combined(mesh, alpha);
  double mu_used = mu >= 0.0 ? mu : default_mu(form);
  InducedSolver solver(form, build_constraints(gen, mesh, z), mu_used);
  CorrespondenceField field = solver.solve_displacement(v, epsilon);

  AdvectResult result;
  result.z = z + epsilon * v;
  result.diagnostics = field.diagnostics;
  std::vector<Vec3> verts(mesh.n());
  for (int i = 0; i < mesh.n(); ++i)
    verts[i] = mesh.vertex(i) + Vec3(field.d.segment<3>(3 * i));
  for (int step = 0; step < newton_steps; ++step) {
    for (auto& p : verts) {
      double f = gen.eval(p, result.z);
      Vec3 g = gen.grad_x(p, result.z);
      double g2 = g.squaredNorm();
      if (g2 < 1e-16) continue;
      Vec3 move = -f / g2 * g;
      double cap = 0.5 * epsilon;
      if (move.norm() > cap) move *= cap / move.norm();
      p += move;
    }
  }
  result.mesh = mesh.with_positions(std::move(verts));
  return result;
}

}  // namespace shapecorr
