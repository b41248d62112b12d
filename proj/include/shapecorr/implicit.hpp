#pragma once

#include <memory>
#include <string>
#include <vector>

#include "shapecorr/sparse.hpp"

namespace shapecorr {

using LatentCode = VecX;

/// Latent-conditioned scalar field f(x, z) with analytic spatial and latent
/// gradients. Sign convention: negative inside, positive outside.
class ImplicitGenerator {
 public:
  virtual ~ImplicitGenerator() = default;

  virtual int latent_dim() const = 0;
  virtual double eval(const Vec3& x, const LatentCode& z) const = 0;
  virtual Vec3 grad_x(const Vec3& x, const LatentCode& z) const = 0;
  virtual VecX grad_z(const Vec3& x, const LatentCode& z) const = 0;
  virtual std::string variant() const = 0;

 protected:
  void check_dim(const LatentCode& z) const;
};

/// f(x, z) = |x - center(z)| - radius(z) with affine center and radius.
/// center(z) = c0 + C z covers pure translation families; radius(z) = r0 + w.z
/// covers growing spheres.
class SphereGenerator : public ImplicitGenerator {
 public:
  SphereGenerator(int latent_dim, Vec3 center0, MatX center_coeff, double radius0,
                  VecX radius_coeff);
  /// Unit sphere family with radius(z) = z[0] around the origin.
  static SphereGenerator radius_family(int latent_dim = 1);
  /// Translation family f(x, z) = f0(x - z[0] * u) of a fixed-radius sphere.
  static SphereGenerator translation_family(const Vec3& u, double radius, int latent_dim = 1);

  int latent_dim() const override { return dim_; }
  double eval(const Vec3& x, const LatentCode& z) const override;
  Vec3 grad_x(const Vec3& x, const LatentCode& z) const override;
  VecX grad_z(const Vec3& x, const LatentCode& z) const override;
  std::string variant() const override { return "sphere"; }

  Vec3 center(const LatentCode& z) const;
  double radius(const LatentCode& z) const;

 private:
  int dim_;
  Vec3 center0_;
  MatX center_coeff_;  // 3 x d
  double radius0_;
  VecX radius_coeff_;  // d
};

/// f(x, z) = |diag(1/a(z)) (x - c(z))| - 1 with affine axes a(z) = a0 + A z
/// and affine center.
class EllipsoidGenerator : public ImplicitGenerator {
 public:
  EllipsoidGenerator(int latent_dim, Vec3 center0, MatX center_coeff, Vec3 axes0,
                     MatX axes_coeff);
  /// Axis family: axes(z) = axes0 + diag-like coupling of the first 3 codes.
  static EllipsoidGenerator axes_family(const Vec3& axes0, int latent_dim = 3);

  int latent_dim() const override { return dim_; }
  double eval(const Vec3& x, const LatentCode& z) const override;
  Vec3 grad_x(const Vec3& x, const LatentCode& z) const override;
  VecX grad_z(const Vec3& x, const LatentCode& z) const override;
  std::string variant() const override { return "ellipsoid"; }

  Vec3 axes(const LatentCode& z) const;
  Vec3 center(const LatentCode& z) const;

 private:
  int dim_;
  Vec3 center0_;
  MatX center_coeff_;
  Vec3 axes0_;
  MatX axes_coeff_;  // 3 x d
};

/// Smooth blend (softmin) of affine sphere sites: capsules from chains of
/// sites along a curve, bumpy spheres from one large site plus small ones.
class BlendGenerator : public ImplicitGenerator {
 public:
  struct Site {
    Vec3 center0;
    MatX center_coeff;  // 3 x d
    double radius0;
    VecX radius_coeff;  // d
  };

  BlendGenerator(int latent_dim, std::vector<Site> sites, double sharpness);

  int latent_dim() const override { return dim_; }
  double eval(const Vec3& x, const LatentCode& z) const override;
  Vec3 grad_x(const Vec3& x, const LatentCode& z) const override;
  VecX grad_z(const Vec3& x, const LatentCode& z) const override;
  std::string variant() const override { return "capsule_blend"; }

  const std::vector<Site>& sites() const { return sites_; }
  double sharpness() const { return sharpness_; }

 private:
  // Stabilized softmin weights and per-site values at (x, z).
  void site_fields(const Vec3& x, const LatentCode& z, VecX& f, std::vector<Vec3>& centers,
                   VecX& radii) const;

  int dim_;
  std::vector<Site> sites_;
  double sharpness_;
};

enum class Activation { Softplus, Sine, Identity };

/// Fully-connected scalar field on the concatenated input [x; z]; gradients
/// via hand-rolled forward/backward passes.
class MlpGenerator : public ImplicitGenerator {
 public:
  struct Layer {
    MatX weights;  // rows x cols
    VecX bias;     // rows
    Activation activation = Activation::Softplus;
  };

  MlpGenerator(int latent_dim, std::vector<Layer> layers);

  int latent_dim() const override { return dim_; }
  double eval(const Vec3& x, const LatentCode& z) const override;
  Vec3 grad_x(const Vec3& x, const LatentCode& z) const override;
  VecX grad_z(const Vec3& x, const LatentCode& z) const override;
  std::string variant() const override { return "mlp"; }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  /// Gradient of the scalar output with respect to the full input [x; z].
  VecX input_gradient(const Vec3& x, const LatentCode& z) const;

 private:
  VecX forward(const VecX& input, std::vector<VecX>* pre_acts,
               std::vector<VecX>* acts) const;

  int dim_;
  std::vector<Layer> layers_;
};

MlpGenerator load_mlp_weights(const std::string& path);
void save_mlp_weights(const MlpGenerator& gen, const std::string& path);

/// Randomly initialized MLP with the given hidden widths (softplus hidden
/// layers, identity scalar output).
MlpGenerator make_random_mlp(int latent_dim, const std::vector<int>& hidden_widths,
                             uint64_t seed);

struct MlpFitSample {
  Vec3 x;
  LatentCode z;
  double target;
};

/// Fits MLP weights to point-wise signed-distance targets with Adam on the
/// absolute-value loss sum |f(x_i, z_i) - t_i|.
void fit_mlp(MlpGenerator& gen, const std::vector<MlpFitSample>& samples, int iterations,
             double learning_rate, uint64_t seed);

/// Number of interpolated codes between a path's endpoints.
inline constexpr int kDefaultPathSteps = 10;
/// Latent step used when advecting a level set onto its neighbor.
inline constexpr double kDefaultLevelStep = 1e-3;

/// Codes z^1..z^T strictly between the endpoints:
/// z^j = z_start + j (z_end - z_start) / (T + 1).
std::vector<LatentCode> latent_path(const LatentCode& z_start, const LatentCode& z_end, int T);

/// Largest relative mismatch between analytic gradients and central finite
/// differences of eval at (x, z); used by generator self-checks and tests.
double gradient_check(const ImplicitGenerator& gen, const Vec3& x, const LatentCode& z,
                      double step = 1e-5);

}  // namespace shapecorr
