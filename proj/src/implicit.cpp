#include "shapecorr/implicit.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "shapecorr/rng.hpp"

namespace shapecorr {

void ImplicitGenerator::check_dim(const LatentCode& z) const {
  if (z.size() != latent_dim())
    throw std::invalid_argument("latent code has dimension " + std::to_string(z.size()) +
                                ", generator expects " + std::to_string(latent_dim()));
  if (!z.allFinite()) throw std::invalid_argument("latent code has non-finite entries");
}

// ---------------------------------------------------------------------------
// Sphere

SphereGenerator::SphereGenerator(int latent_dim, Vec3 center0, MatX center_coeff,
                                 double radius0, VecX radius_coeff)
    : dim_(latent_dim),
      center0_(std::move(center0)),
      center_coeff_(std::move(center_coeff)),
      radius0_(radius0),
      radius_coeff_(std::move(radius_coeff)) {
  if (center_coeff_.rows() != 3 || center_coeff_.cols() != dim_ ||
      radius_coeff_.size() != dim_)
    throw std::invalid_argument("SphereGenerator: coefficient shape mismatch");
}

SphereGenerator SphereGenerator::radius_family(int latent_dim) {
  VecX w = VecX::Zero(latent_dim);
  w[0] = 1.0;
  return SphereGenerator(latent_dim, Vec3::Zero(), MatX::Zero(3, latent_dim), 0.0, w);
}

SphereGenerator SphereGenerator::translation_family(const Vec3& u, double radius,
                                                    int latent_dim) {
  MatX c = MatX::Zero(3, latent_dim);
  c.col(0) = u;
  return SphereGenerator(latent_dim, Vec3::Zero(), c, radius, VecX::Zero(latent_dim));
}

Vec3 SphereGenerator::center(const LatentCode& z) const { return center0_ + center_coeff_ * z; }
double SphereGenerator::radius(const LatentCode& z) const {
  return radius0_ + radius_coeff_.dot(z);
}

double SphereGenerator::eval(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  return (x - center(z)).norm() - radius(z);
}

Vec3 SphereGenerator::grad_x(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  Vec3 r = x - center(z);
  double n = r.norm();
  if (n < 1e-300) return Vec3::Zero();  // degenerate at the center
  return r / n;
}

VecX SphereGenerator::grad_z(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  return -center_coeff_.transpose() * grad_x(x, z) - radius_coeff_;
}

// ---------------------------------------------------------------------------
// Ellipsoid

EllipsoidGenerator::EllipsoidGenerator(int latent_dim, Vec3 center0, MatX center_coeff,
                                       Vec3 axes0, MatX axes_coeff)
    : dim_(latent_dim),
      center0_(std::move(center0)),
      center_coeff_(std::move(center_coeff)),
      axes0_(std::move(axes0)),
      axes_coeff_(std::move(axes_coeff)) {
  if (center_coeff_.rows() != 3 || center_coeff_.cols() != dim_ || axes_coeff_.rows() != 3 ||
      axes_coeff_.cols() != dim_)
    throw std::invalid_argument("EllipsoidGenerator: coefficient shape mismatch");
}

EllipsoidGenerator EllipsoidGenerator::axes_family(const Vec3& axes0, int latent_dim) {
  MatX a = MatX::Zero(3, latent_dim);
  for (int k = 0; k < std::min(3, latent_dim); ++k) a(k, k) = 1.0;
  return EllipsoidGenerator(latent_dim, Vec3::Zero(), MatX::Zero(3, latent_dim), axes0, a);
}

Vec3 EllipsoidGenerator::axes(const LatentCode& z) const { return axes0_ + axes_coeff_ * z; }
Vec3 EllipsoidGenerator::center(const LatentCode& z) const {
  return center0_ + center_coeff_ * z;
}

double EllipsoidGenerator::eval(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  Vec3 a = axes(z);
  if (a.minCoeff() <= 0.0) throw std::invalid_argument("EllipsoidGenerator: axis <= 0");
  Vec3 q = (x - center(z)).cwiseQuotient(a);
  return q.norm() - 1.0;
}

Vec3 EllipsoidGenerator::grad_x(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  Vec3 a = axes(z);
  Vec3 q = (x - center(z)).cwiseQuotient(a);
  double n = q.norm();
  if (n < 1e-300) return Vec3::Zero();
  return q.cwiseQuotient(a) / n;
}

VecX EllipsoidGenerator::grad_z(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  Vec3 a = axes(z);
  Vec3 q = (x - center(z)).cwiseQuotient(a);
  double n = q.norm();
  if (n < 1e-300) return VecX::Zero(dim_);
  Vec3 df_da = -q.cwiseProduct(q).cwiseQuotient(a) / n;
  Vec3 gx = q.cwiseQuotient(a) / n;
  return axes_coeff_.transpose() * df_da - center_coeff_.transpose() * gx;
}

// ---------------------------------------------------------------------------
// Softmin blend of sphere sites

BlendGenerator::BlendGenerator(int latent_dim, std::vector<Site> sites, double sharpness)
    : dim_(latent_dim), sites_(std::move(sites)), sharpness_(sharpness) {
  if (sites_.empty()) throw std::invalid_argument("BlendGenerator: no sites");
  if (sharpness_ <= 0.0) throw std::invalid_argument("BlendGenerator: sharpness <= 0");
  for (const auto& s : sites_)
    if (s.center_coeff.rows() != 3 || s.center_coeff.cols() != dim_ ||
        s.radius_coeff.size() != dim_)
      throw std::invalid_argument("BlendGenerator: site coefficient shape mismatch");
}

void BlendGenerator::site_fields(const Vec3& x, const LatentCode& z, VecX& f,
                                 std::vector<Vec3>& centers, VecX& radii) const {
  const int m = static_cast<int>(sites_.size());
  f.resize(m);
  radii.resize(m);
  centers.resize(m);
  for (int k = 0; k < m; ++k) {
    centers[k] = sites_[k].center0 + sites_[k].center_coeff * z;
    radii[k] = sites_[k].radius0 + sites_[k].radius_coeff.dot(z);
    f[k] = (x - centers[k]).norm() - radii[k];
  }
}

double BlendGenerator::eval(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  VecX f, radii;
  std::vector<Vec3> centers;
  site_fields(x, z, f, centers, radii);
  double fmin = f.minCoeff();
  double s = 0.0;
  for (int k = 0; k < f.size(); ++k) s += std::exp(-sharpness_ * (f[k] - fmin));
  return fmin - std::log(s) / sharpness_;
}

Vec3 BlendGenerator::grad_x(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  VecX f, radii;
  std::vector<Vec3> centers;
  site_fields(x, z, f, centers, radii);
  double fmin = f.minCoeff();
  double s = 0.0;
  Vec3 g = Vec3::Zero();
  for (int k = 0; k < f.size(); ++k) {
    double w = std::exp(-sharpness_ * (f[k] - fmin));
    s += w;
    Vec3 r = x - centers[k];
    double n = r.norm();
    if (n > 1e-300) g += w * r / n;
  }
  return g / s;
}

VecX BlendGenerator::grad_z(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  VecX f, radii;
  std::vector<Vec3> centers;
  site_fields(x, z, f, centers, radii);
  double fmin = f.minCoeff();
  double s = 0.0;
  VecX g = VecX::Zero(dim_);
  for (int k = 0; k < f.size(); ++k) {
    double w = std::exp(-sharpness_ * (f[k] - fmin));
    s += w;
    Vec3 r = x - centers[k];
    double n = r.norm();
    Vec3 u = n > 1e-300 ? Vec3(r / n) : Vec3::Zero();
    g += w * (-sites_[k].center_coeff.transpose() * u - sites_[k].radius_coeff);
  }
  return g / s;
}

// ---------------------------------------------------------------------------
// MLP

namespace {

double act_eval(Activation a, double t) {
  switch (a) {
    case Activation::Softplus: return t > 30.0 ? t : std::log1p(std::exp(t));
    case Activation::Sine: return std::sin(t);
    case Activation::Identity: return t;
  }
  return t;
}

double act_deriv(Activation a, double t) {
  switch (a) {
    case Activation::Softplus: return 1.0 / (1.0 + std::exp(-t));
    case Activation::Sine: return std::cos(t);
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

Activation activation_from(const std::string& name) {
  if (name == "softplus") return Activation::Softplus;
  if (name == "sine") return Activation::Sine;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Softplus: return "softplus";
    case Activation::Sine: return "sine";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

}  // namespace

MlpGenerator::MlpGenerator(int latent_dim, std::vector<Layer> layers)
    : dim_(latent_dim), layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("MlpGenerator: no layers");
  int expect = 3 + dim_;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weights.cols() != expect)
      throw std::invalid_argument("layer " + std::to_string(l) + ": expected " +
                                  std::to_string(expect) + " input columns, got " +
                                  std::to_string(layer.weights.cols()));
    if (layer.bias.size() != layer.weights.rows())
      throw std::invalid_argument("layer " + std::to_string(l) + ": bias size " +
                                  std::to_string(layer.bias.size()) + " != rows " +
                                  std::to_string(layer.weights.rows()));
    expect = static_cast<int>(layer.weights.rows());
  }
  if (expect != 1)
    throw std::invalid_argument("last layer must produce a scalar, got " +
                                std::to_string(expect) + " outputs");
}

VecX MlpGenerator::forward(const VecX& input, std::vector<VecX>* pre_acts,
                           std::vector<VecX>* acts) const {
  VecX a = input;
  if (acts) acts->push_back(a);
  for (const auto& layer : layers_) {
    VecX pre = layer.weights * a + layer.bias;
    if (pre_acts) pre_acts->push_back(pre);
    a.resize(pre.size());
    for (int i = 0; i < pre.size(); ++i) a[i] = act_eval(layer.activation, pre[i]);
    if (acts) acts->push_back(a);
  }
  return a;
}

double MlpGenerator::eval(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  VecX input(3 + dim_);
  input << x, z;
  return forward(input, nullptr, nullptr)[0];
}

VecX MlpGenerator::input_gradient(const Vec3& x, const LatentCode& z) const {
  check_dim(z);
  VecX input(3 + dim_);
  input << x, z;
  std::vector<VecX> pre;
  forward(input, &pre, nullptr);
  // Reverse pass: gradient of the scalar output.
  VecX g = VecX::Ones(1);
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    VecX gp(pre[l].size());
    for (int i = 0; i < gp.size(); ++i)
      gp[i] = g[i] * act_deriv(layers_[l].activation, pre[l][i]);
    g = layers_[l].weights.transpose() * gp;
  }
  return g;
}

Vec3 MlpGenerator::grad_x(const Vec3& x, const LatentCode& z) const {
  return input_gradient(x, z).head<3>();
}

VecX MlpGenerator::grad_z(const Vec3& x, const LatentCode& z) const {
  return input_gradient(x, z).tail(dim_);
}

MlpGenerator load_mlp_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (!j.contains("latent_dim") || !j.contains("layers"))
    throw std::runtime_error(path + ": missing 'latent_dim' or 'layers'");
  int dim = j["latent_dim"].get<int>();
  std::vector<MlpGenerator::Layer> layers;
  for (size_t l = 0; l < j["layers"].size(); ++l) {
    const auto& jl = j["layers"][l];
    int rows = jl["rows"].get<int>(), cols = jl["cols"].get<int>();
    auto w = jl["weights"].get<std::vector<double>>();
    auto b = jl["bias"].get<std::vector<double>>();
    if (static_cast<int>(w.size()) != rows * cols)
      throw std::runtime_error(path + ": layer " + std::to_string(l) + " has " +
                               std::to_string(w.size()) + " weights, expected " +
                               std::to_string(rows * cols));
    if (static_cast<int>(b.size()) != rows)
      throw std::runtime_error(path + ": layer " + std::to_string(l) + " bias size mismatch");
    MlpGenerator::Layer layer;
    layer.weights = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                             Eigen::RowMajor>>(w.data(), rows, cols);
    layer.bias = Eigen::Map<VecX>(b.data(), rows);
    layer.activation = activation_from(jl["activation"].get<std::string>());
    layers.push_back(std::move(layer));
  }
  try {
    return MlpGenerator(dim, std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_mlp_weights(const MlpGenerator& gen, const std::string& path) {
  nlohmann::json j;
  j["latent_dim"] = gen.latent_dim();
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : gen.layers()) {
    nlohmann::json jl;
    jl["rows"] = layer.weights.rows();
    jl["cols"] = layer.weights.cols();
    std::vector<double> w;
    w.reserve(layer.weights.size());
    for (int r = 0; r < layer.weights.rows(); ++r)
      for (int c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
    jl["weights"] = w;
    jl["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
    jl["activation"] = activation_name(layer.activation);
    j["layers"].push_back(jl);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

MlpGenerator make_random_mlp(int latent_dim, const std::vector<int>& hidden_widths,
                             uint64_t seed) {
  Rng rng(seed);
  std::vector<MlpGenerator::Layer> layers;
  int in = 3 + latent_dim;
  auto make_layer = [&](int rows, int cols, Activation act) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / cols));
    MlpGenerator::Layer l;
    l.weights = MatX::NullaryExpr(rows, cols, [&]() { return gauss(rng); });
    l.bias = VecX::Zero(rows);
    l.activation = act;
    return l;
  };
  for (int w : hidden_widths) {
    layers.push_back(make_layer(w, in, Activation::Softplus));
    in = w;
  }
  layers.push_back(make_layer(1, in, Activation::Identity));
  return MlpGenerator(latent_dim, std::move(layers));
}

void fit_mlp(MlpGenerator& gen, const std::vector<MlpFitSample>& samples, int iterations,
             double learning_rate, uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("fit_mlp: no samples");
  auto& layers = gen.mutable_layers();
  const int nl = static_cast<int>(layers.size());
  std::vector<MatX> mw(nl), vw(nl);
  std::vector<VecX> mb(nl), vb(nl);
  for (int l = 0; l < nl; ++l) {
    mw[l] = MatX::Zero(layers[l].weights.rows(), layers[l].weights.cols());
    vw[l] = mw[l];
    mb[l] = VecX::Zero(layers[l].bias.size());
    vb[l] = mb[l];
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Rng rng(seed);
  const int batch = std::min<int>(256, static_cast<int>(samples.size()));
  std::uniform_int_distribution<int> pick(0, static_cast<int>(samples.size()) - 1);

  for (int it = 1; it <= iterations; ++it) {
    std::vector<MatX> gw(nl);
    std::vector<VecX> gb(nl);
    for (int l = 0; l < nl; ++l) {
      gw[l] = MatX::Zero(layers[l].weights.rows(), layers[l].weights.cols());
      gb[l] = VecX::Zero(layers[l].bias.size());
    }
    for (int s = 0; s < batch; ++s) {
      const auto& sample = samples[pick(rng)];
      VecX input(3 + gen.latent_dim());
      input << sample.x, sample.z;
      // Forward with cached activations.
      std::vector<VecX> pre(nl), act(nl + 1);
      act[0] = input;
      for (int l = 0; l < nl; ++l) {
        pre[l] = layers[l].weights * act[l] + layers[l].bias;
        act[l + 1].resize(pre[l].size());
        for (int i = 0; i < pre[l].size(); ++i)
          act[l + 1][i] = act_eval(layers[l].activation, pre[l][i]);
      }
      double resid = act[nl][0] - sample.target;
      double gout = resid > 0 ? 1.0 : (resid < 0 ? -1.0 : 0.0);  // d|r|/dr
      VecX g = VecX::Constant(1, gout);
      for (int l = nl - 1; l >= 0; --l) {
        VecX gp(pre[l].size());
        for (int i = 0; i < gp.size(); ++i)
          gp[i] = g[i] * act_deriv(layers[l].activation, pre[l][i]);
        gw[l] += gp * act[l].transpose();
        gb[l] += gp;
        g = layers[l].weights.transpose() * gp;
      }
    }
    double corr1 = 1.0 - std::pow(beta1, it), corr2 = 1.0 - std::pow(beta2, it);
    for (int l = 0; l < nl; ++l) {
      gw[l] /= batch;
      gb[l] /= batch;
      mw[l] = beta1 * mw[l] + (1 - beta1) * gw[l];
      vw[l] = beta2 * vw[l] + (1 - beta2) * gw[l].cwiseProduct(gw[l]);
      mb[l] = beta1 * mb[l] + (1 - beta1) * gb[l];
      vb[l] = beta2 * vb[l] + (1 - beta2) * gb[l].cwiseProduct(gb[l]);
      layers[l].weights -=
          learning_rate * (mw[l] / corr1)
              .cwiseQuotient(((vw[l] / corr2).cwiseSqrt().array() + eps).matrix());
      layers[l].bias -=
          learning_rate * (mb[l] / corr1)
              .cwiseQuotient(((vb[l] / corr2).cwiseSqrt().array() + eps).matrix());
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<LatentCode> latent_path(const LatentCode& z_start, const LatentCode& z_end,
                                    int T) {
  if (z_start.size() != z_end.size())
    throw std::invalid_argument("latent_path: dimension mismatch");
  if (T < 0) throw std::invalid_argument("latent_path: T must be >= 0");
  std::vector<LatentCode> path;
  path.reserve(T);
  for (int j = 1; j <= T; ++j)
    path.push_back(z_start + (static_cast<double>(j) / (T + 1)) * (z_end - z_start));
  return path;
}

double gradient_check(const ImplicitGenerator& gen, const Vec3& x, const LatentCode& z,
                      double step) {
  Vec3 gx = gen.grad_x(x, z);
  VecX gz = gen.grad_z(x, z);
  double worst = 0.0;
  auto rel = [](double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
  };
  for (int a = 0; a < 3; ++a) {
    Vec3 dx = Vec3::Zero();
    dx[a] = step;
    double fd = (gen.eval(x + dx, z) - gen.eval(x - dx, z)) / (2 * step);
    worst = std::max(worst, rel(gx[a], fd));
  }
  for (int k = 0; k < z.size(); ++k) {
    LatentCode dz = z;
    dz[k] += step;
    LatentCode dz2 = z;
    dz2[k] -= step;
    double fd = (gen.eval(x, dz) - gen.eval(x, dz2)) / (2 * step);
    worst = std::max(worst, rel(gz[k], fd));
  }
  return worst;
}

}  // namespace shapecorr
