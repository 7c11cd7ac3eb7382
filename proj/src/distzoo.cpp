#include "ebscore/distzoo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace ebscore {

class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual double log_density(const Vector& x) const = 0;
  virtual Vector score(const Vector& x) const = 0;
  virtual bool has_hessian() const { return false; }
  virtual Matrix hessian(const Vector&) const {
    throw UnsupportedOperation("hessian_log_density: not available for family '" + family + "'");
  }
  virtual Vector draw(Rng& rng) const = 0;
  virtual const GaussianMixtureSpec* mixture() const { return nullptr; }

  Index dim = 0;
  double alpha = 1.0;
  double lip = 1.0;
  double beta = 1.0;
  Vector mean;
  TargetSpec spec;
  std::string family;
};

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

double mean_diameter(const GaussianMixtureSpec& spec) {
  double diameter = 0.0;
  for (std::size_t a = 0; a < spec.means.size(); ++a) {
    if (spec.weights[a] <= 0.0) continue;
    for (std::size_t b = a + 1; b < spec.means.size(); ++b) {
      if (spec.weights[b] <= 0.0) continue;
      diameter = std::max(diameter, (spec.means[a] - spec.means[b]).norm());
    }
  }
  return diameter;
}

class MixtureModel final : public TargetModel {
 public:
  explicit MixtureModel(GaussianMixtureSpec mixture) : mixture_(std::move(mixture)) {
    mixture_.validate();
    dim = mixture_.dim();
    const double variance = mixture_.variance;
    for (std::size_t k = 0; k < mixture_.weights.size(); ++k) {
      if (mixture_.weights[k] <= 0.0) continue;
      active_means_.push_back(mixture_.means[k]);
      log_weights_.push_back(std::log(mixture_.weights[k]));
      cumulative_.push_back((cumulative_.empty() ? 0.0 : cumulative_.back()) + mixture_.weights[k]);
    }
    cumulative_.back() = std::numeric_limits<double>::infinity();
    centers_.resize(dim, static_cast<Index>(active_means_.size()));
    for (std::size_t k = 0; k < active_means_.size(); ++k) centers_.col(static_cast<Index>(k)) = active_means_[k];

    mean = Vector::Zero(dim);
    for (std::size_t k = 0; k < mixture_.means.size(); ++k) mean += mixture_.weights[k] * mixture_.means[k];
    alpha = gmm_subgaussian_alpha(mixture_);
    lip = gmm_lipschitz_bound(mixture_);
    beta = 1.0;
    spec = mixture_;
    family = active_means_.size() == 1 ? "gaussian" : "gmm";
    log_norm_ = -0.5 * static_cast<double>(dim) * (kLog2Pi + std::log(variance));
    sigma_ = std::sqrt(variance);
  }

  double log_density(const Vector& x) const override {
    Eigen::ArrayXd a = exponents(x);
    const double top = a.maxCoeff();
    return top + std::log((a - top).exp().sum()) + log_norm_;
  }

  Vector score(const Vector& x) const override {
    const Eigen::ArrayXd r = responsibilities(x);
    return (centers_ * r.matrix() - x) / mixture_.variance;
  }

  bool has_hessian() const override { return true; }

  Matrix hessian(const Vector& x) const override {
    const Eigen::ArrayXd r = responsibilities(x);
    const Vector center = centers_ * r.matrix();
    const Matrix deviations = centers_.colwise() - center;
    const Matrix spread = deviations * r.matrix().asDiagonal() * deviations.transpose();
    const double s2 = mixture_.variance;
    return spread / (s2 * s2) - Matrix::Identity(dim, dim) / s2;
  }

  Vector draw(Rng& rng) const override {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto k = static_cast<Index>(it - cumulative_.begin());
    return centers_.col(k) + sigma_ * standard_normal(rng, dim);
  }

  const GaussianMixtureSpec* mixture() const override { return &mixture_; }

 private:
  Eigen::ArrayXd exponents(const Vector& x) const {
    Eigen::ArrayXd a = (centers_.colwise() - x).colwise().squaredNorm().transpose().array();
    a *= -0.5 / mixture_.variance;
    for (Index k = 0; k < a.size(); ++k) a(k) += log_weights_[static_cast<std::size_t>(k)];
    return a;
  }

  Eigen::ArrayXd responsibilities(const Vector& x) const {
    Eigen::ArrayXd a = exponents(x);
    a = (a - a.maxCoeff()).exp();
    return a / a.sum();
  }

  GaussianMixtureSpec mixture_;
  std::vector<Vector> active_means_;
  std::vector<double> log_weights_;
  std::vector<double> cumulative_;
  Matrix centers_;
  double log_norm_ = 0.0;
  double sigma_ = 1.0;
};

class LowerBoundModel final : public TargetModel {
 public:
  explicit LowerBoundModel(LowerBoundFamilySpec family_spec) : lb_(std::move(family_spec)) {
    lb_.validate();
    dim = lb_.dim;
    m_ = lb_.grid_m;
    scale_ = lb_.pert_scale;
    spec = lb_;
    family = "lower_bound";
    beta = 1.0;
    alpha = 1.0;
    mean = Vector::Zero(dim);
    if (dim == 1) {
      double bit_sum = 0.0;
      for (int b : lb_.bits) bit_sum += b;
      mean(0) = -0.25 * std::pow(scale_, 4) * bit_sum;
    }
    const double min_f0 = std::exp(-0.5 * dim * kLog2Pi - 0.5 * dim);
    envelope_ = 1.0 + scale_ * scale_ * std::pow(2.0, dim) / min_f0;
    certify();
  }

  double log_density(const Vector& x) const override { return std::log(density(x)); }

  Vector score(const Vector& x) const override {
    Cell cell;
    if (!locate(x, cell)) return -x;
    const double f0 = standard_normal_density(x);
    Vector numerator = -x * f0 + scale_ * cell.bit * cell.grad;
    return numerator / (f0 + scale_ * scale_ * cell.bit * cell.value);
  }

  bool has_hessian() const override { return true; }

  Matrix hessian(const Vector& x) const override {
    Cell cell;
    const Matrix identity = Matrix::Identity(dim, dim);
    if (!locate(x, cell)) return -identity;
    const double f0 = standard_normal_density(x);
    const double f = f0 + scale_ * scale_ * cell.bit * cell.value;
    const Vector grad = -x * f0 + scale_ * cell.bit * cell.grad;
    const Matrix second = f0 * (x * x.transpose() - identity) + cell.bit * cell.hess;
    return second / f - grad * grad.transpose() / (f * f);
  }

  Vector draw(Rng& rng) const override {
    for (;;) {
      Vector x = standard_normal(rng, dim);
      const double u = rng.uniform();
      if (u * envelope_ * standard_normal_density(x) <= density(x)) return x;
    }
  }

 private:
  struct Cell {
    double bit = 0.0;
    double value = 0.0;  // W(y)
    Vector grad;         // grad_y W(y)
    Matrix hess;         // Hessian_y W(y)
  };

  static double standard_normal_density(const Vector& x) {
    return std::exp(-0.5 * static_cast<double>(x.size()) * kLog2Pi - 0.5 * x.squaredNorm());
  }

  double density(const Vector& x) const {
    Cell cell;
    const double f0 = standard_normal_density(x);
    if (!locate(x, cell)) return f0;
    return f0 + scale_ * scale_ * cell.bit * cell.value;
  }

  bool locate(const Vector& x, Cell& cell) const {
    Index flat = 0;
    Index stride = 1;
    Eigen::Array2d y = Eigen::Array2d::Zero();
    for (Index t = 0; t < dim; ++t) {
      if (!(x(t) >= 0.0 && x(t) <= 1.0)) return false;
      const double scaled = x(t) * m_;
      const int c = std::min(static_cast<int>(std::floor(scaled)), m_ - 1);
      y(t) = scaled - c;
      flat += c * stride;
      stride *= m_;
    }
    cell.bit = lb_.bits[static_cast<std::size_t>(flat)];
    Eigen::Array2d w = Eigen::Array2d::Zero(), dw = w, ddw = w;
    for (Index t = 0; t < dim; ++t) {
      w(t) = sinusoid_kernel(y(t));
      dw(t) = sinusoid_kernel_derivative(y(t));
      ddw(t) = sinusoid_kernel_second_derivative(y(t));
    }
    if (dim == 1) {
      cell.value = w(0);
      cell.grad = Vector::Constant(1, dw(0));
      cell.hess = Matrix::Constant(1, 1, ddw(0));
    } else {
      cell.value = w(0) * w(1);
      cell.grad = Vector(2);
      cell.grad << dw(0) * w(1), w(0) * dw(1);
      cell.hess = Matrix(2, 2);
      cell.hess << ddw(0) * w(1), dw(0) * dw(1), dw(0) * dw(1), w(0) * ddw(1);
    }
    return true;
  }

  // Checks positivity on a grid through every cell's quarter points and sets
  // lip to 5% above the largest Hessian norm found there (1 outside D).
  void certify() {
    const int per_cell = 16 * std::max(1, (256 + 16 * m_ - 1) / (16 * m_));
    const int axis_points = per_cell * m_ + 1;
    double worst = 1.0;
    Vector x(dim);
    const Index total = dim == 1 ? axis_points : static_cast<Index>(axis_points) * axis_points;
    for (Index flat = 0; flat < total; ++flat) {
      Index rest = flat;
      for (Index t = 0; t < dim; ++t) {
        x(t) = static_cast<double>(rest % axis_points) / (axis_points - 1);
        rest /= axis_points;
      }
      const double f = density(x);
      if (!(f > 0.0)) {
        throw ConstructionError("lower-bound family: density is not positive on the unit cube (pert_scale " +
                                std::to_string(scale_) + ", dim " + std::to_string(dim) + ")");
      }
      const Eigen::SelfAdjointEigenSolver<Matrix> solver(hessian(x), Eigen::EigenvaluesOnly);
      worst = std::max(worst, solver.eigenvalues().cwiseAbs().maxCoeff());
    }
    lip = 1.05 * worst;
  }

  LowerBoundFamilySpec lb_;
  int m_ = 1;
  double scale_ = 1.0;
  double envelope_ = 1.0;
};

class HolderModel final : public TargetModel {
 public:
  explicit HolderModel(HolderSpec holder) : holder_(holder) {
    holder_.validate();
    p_ = 1.0 + holder_.beta;
    dim = 1;
    beta = holder_.beta;
    lip = std::pow(2.0, 1.0 - beta);
    mean = Vector::Zero(1);
    const double variance = std::pow(p_, 2.0 / p_) * std::tgamma(3.0 / p_) / std::tgamma(1.0 / p_);
    alpha = std::sqrt(variance);
    spec = holder_;
    family = "holder";
    log_norm_ = -(std::log(2.0) + (1.0 / p_ - 1.0) * std::log(p_) + std::lgamma(1.0 / p_));
  }

  double log_density(const Vector& x) const override {
    return log_norm_ - std::pow(std::abs(x(0)), p_) / p_;
  }

  Vector score(const Vector& x) const override {
    const double v = x(0);
    const double magnitude = std::pow(std::abs(v), holder_.beta);
    return Vector::Constant(1, v > 0 ? -magnitude : (v < 0 ? magnitude : 0.0));
  }

  Vector draw(Rng& rng) const override {
    std::gamma_distribution<double> gamma(1.0 / p_, 1.0);
    const double radius = std::pow(p_ * gamma(rng), 1.0 / p_);
    return Vector::Constant(1, rng.uniform() < 0.5 ? -radius : radius);
  }

 private:
  HolderSpec holder_;
  double p_ = 2.0;
  double log_norm_ = 0.0;
};

}  // namespace

void GaussianMixtureSpec::validate() const {
  require(!means.empty(), "gaussian mixture: empty component list");
  require(weights.size() == means.size(), "gaussian mixture: weights and means differ in length");
  require(variance > 0.0 && std::isfinite(variance), "gaussian mixture: variance must be positive");
  const Index d = means.front().size();
  require(d >= 1, "gaussian mixture: zero-dimensional mean");
  double total = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    require(means[k].size() == d, "gaussian mixture: means have different dimensions");
    require(means[k].allFinite(), "gaussian mixture: non-finite mean");
    require(weights[k] >= 0.0, "gaussian mixture: negative weight");
    total += weights[k];
  }
  require(std::abs(total - 1.0) <= 1e-12, "gaussian mixture: weights must sum to 1");
}

Index LowerBoundFamilySpec::cell_count() const {
  Index count = 1;
  for (int t = 0; t < dim; ++t) count *= grid_m;
  return count;
}

void LowerBoundFamilySpec::validate() const {
  require(dim == 1 || dim == 2, "lower-bound family: dim must be 1 or 2");
  require(grid_m >= 1, "lower-bound family: grid_m must be positive");
  require(pert_scale * grid_m == 1.0, "lower-bound family: pert_scale * grid_m must equal 1");
  require(static_cast<Index>(bits.size()) == cell_count(), "lower-bound family: bits must have grid_m^dim entries");
  for (int b : bits) require(b == 0 || b == 1, "lower-bound family: bits must be 0 or 1");
}

LowerBoundFamilySpec LowerBoundFamilySpec::filled(int dim, int grid_m, int bit) {
  LowerBoundFamilySpec spec;
  spec.dim = dim;
  spec.grid_m = grid_m;
  spec.pert_scale = 1.0 / grid_m;
  spec.bits.assign(static_cast<std::size_t>(spec.cell_count()), bit);
  return spec;
}

void HolderSpec::validate() const {
  require(beta > 0.0 && beta <= 1.0, "holder target: beta must lie in (0, 1]");
}

AnalyticTarget::AnalyticTarget(std::shared_ptr<const TargetModel> model) : model_(std::move(model)) {}

Index AnalyticTarget::dim() const { return model_->dim; }

double AnalyticTarget::log_density(const Vector& x) const {
  require(x.size() == model_->dim, "log_density: point dimension mismatch");
  return model_->log_density(x);
}

double AnalyticTarget::density(const Vector& x) const { return std::exp(log_density(x)); }

Vector AnalyticTarget::score(const Vector& x) const {
  require(x.size() == model_->dim, "score: point dimension mismatch");
  return model_->score(x);
}

bool AnalyticTarget::has_hessian() const { return model_->has_hessian(); }

Matrix AnalyticTarget::hessian_log_density(const Vector& x) const {
  require(x.size() == model_->dim, "hessian_log_density: point dimension mismatch");
  return model_->hessian(x);
}

Matrix AnalyticTarget::sample(Rng& rng, Index count) const {
  require(count >= 0, "sample: negative count");
  Matrix out(count, model_->dim);
  for (Index i = 0; i < count; ++i) out.row(i) = model_->draw(rng).transpose();
  return out;
}

Matrix AnalyticTarget::sample(std::uint64_t seed, Index count) const {
  Rng rng(seed);
  return sample(rng, count);
}

double AnalyticTarget::alpha() const { return model_->alpha; }
double AnalyticTarget::lip() const { return model_->lip; }
double AnalyticTarget::holder_beta() const { return model_->beta; }
const Vector& AnalyticTarget::mean() const { return model_->mean; }
const TargetSpec& AnalyticTarget::spec() const { return model_->spec; }
std::string_view AnalyticTarget::family() const { return model_->family; }
const GaussianMixtureSpec* AnalyticTarget::mixture() const { return model_->mixture(); }

AnalyticTarget make_gaussian(const Vector& mean, double variance) {
  require(variance > 0.0 && std::isfinite(variance), "make_gaussian: variance must be positive");
  GaussianMixtureSpec spec;
  spec.weights = {1.0};
  spec.means = {mean};
  spec.variance = variance;
  return make_gmm(spec);
}

AnalyticTarget make_gaussian(double mean, double variance) {
  return make_gaussian(Vector::Constant(1, mean), variance);
}

AnalyticTarget make_gmm(const GaussianMixtureSpec& spec) {
  return AnalyticTarget(std::make_shared<MixtureModel>(spec));
}

AnalyticTarget make_lower_bound_target(const LowerBoundFamilySpec& spec) {
  return AnalyticTarget(std::make_shared<LowerBoundModel>(spec));
}

AnalyticTarget make_holder_target(const HolderSpec& spec) {
  return AnalyticTarget(std::make_shared<HolderModel>(spec));
}

AnalyticTarget make_target(const TargetSpec& spec) {
  return std::visit(
      [](const auto& s) -> AnalyticTarget {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, GaussianMixtureSpec>) return make_gmm(s);
        else if constexpr (std::is_same_v<T, LowerBoundFamilySpec>) return make_lower_bound_target(s);
        else return make_holder_target(s);
      },
      spec);
}

GaussianMixtureSpec convolve_gaussian(const GaussianMixtureSpec& spec, double h) {
  require(h > 0.0 && std::isfinite(h), "convolve_gaussian: h must be positive");
  GaussianMixtureSpec out = spec;
  out.variance += h;
  return out;
}

AnalyticTarget convolve_gaussian(const AnalyticTarget& target, double h) {
  const GaussianMixtureSpec* mixture = target.mixture();
  if (mixture == nullptr) {
    throw UnsupportedOperation("convolve_gaussian: no closed form for family '" + std::string(target.family()) + "'");
  }
  return make_gmm(convolve_gaussian(*mixture, h));
}

Vector score_by_finite_difference(const AnalyticTarget& target, const Vector& x, double step) {
  require(step > 0.0, "score_by_finite_difference: step must be positive");
  Vector gradient(x.size());
  Vector probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double up = target.log_density(probe);
    probe(i) = x(i) - step;
    const double down = target.log_density(probe);
    probe(i) = x(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("score_by_finite_difference: log-density is not finite near the query point");
    }
    gradient(i) = (up - down) / (2.0 * step);
  }
  return gradient;
}

double gmm_lipschitz_bound(const GaussianMixtureSpec& spec) {
  spec.validate();
  const double s2 = spec.variance;
  const double diameter = mean_diameter(spec);
  return std::max(1.0 / s2, diameter * diameter / (4.0 * s2 * s2) - 1.0 / s2);
}

double gmm_subgaussian_alpha(const GaussianMixtureSpec& spec) {
  spec.validate();
  const double diameter = mean_diameter(spec);
  return std::sqrt(spec.variance + 0.25 * diameter * diameter);
}

double sinusoid_kernel(double x) {
  if (x < 0.0 || x > 1.0) return 0.0;
  const double c = std::cos(4.0 * std::numbers::pi * x);
  return x < 0.5 ? 1.0 - c : c - 1.0;
}

double sinusoid_kernel_derivative(double x) {
  if (x < 0.0 || x > 1.0) return 0.0;
  const double s = 4.0 * std::numbers::pi * std::sin(4.0 * std::numbers::pi * x);
  return x < 0.5 ? s : -s;
}

double sinusoid_kernel_second_derivative(double x) {
  if (x < 0.0 || x > 1.0) return 0.0;
  const double a = 4.0 * std::numbers::pi;
  const double c = a * a * std::cos(a * x);
  return x < 0.5 ? c : -c;
}

int hamming_distance(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size(), "hamming_distance: length mismatch");
  int distance = 0;
  for (std::size_t i = 0; i < a.size(); ++i) distance += a[i] != b[i];
  return distance;
}

std::vector<std::vector<int>> gilbert_varshamov_packing(int length, int min_distance, int max_codewords,
                                                        int attempts, Rng& rng) {
  require(length >= 1 && min_distance >= 0 && max_codewords >= 1 && attempts >= 1,
          "gilbert_varshamov_packing: invalid arguments");
  std::vector<std::vector<int>> code;
  int misses = 0;
  std::vector<int> word(static_cast<std::size_t>(length));
  while (static_cast<int>(code.size()) < max_codewords && misses < attempts) {
    for (int& bit : word) bit = static_cast<int>(rng() >> 63);
    const bool fits = std::all_of(code.begin(), code.end(),
                                  [&](const std::vector<int>& c) { return hamming_distance(c, word) >= min_distance; });
    if (fits) {
      code.push_back(word);
      misses = 0;
    } else {
      ++misses;
    }
  }
  return code;
}

}  // namespace ebscore
