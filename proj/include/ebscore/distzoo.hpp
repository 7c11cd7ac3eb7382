#pragma once

#include "ebscore/core.hpp"
#include "ebscore/random.hpp"

#include <cstdint>
#include <memory>
#include <string_view>
#include <variant>
#include <vector>

namespace ebscore {

/// Isotropic Gaussian mixture sum_k w_k N(mu_k, variance * I).
struct GaussianMixtureSpec {
  std::vector<double> weights;
  std::vector<Vector> means;
  double variance = 1.0;

  Index dim() const { return means.empty() ? 0 : means.front().size(); }
  void validate() const;
};

/// Perturbed standard normal f_b = phi + pert^2 sum_i b_i w((x - x_i) / pert)
/// on the unit cube, split into grid_m cells per axis. Bit i addresses the
/// cell with multi-index (i mod m, i / m); axis 0 varies fastest.
struct LowerBoundFamilySpec {
  int dim = 1;
  int grid_m = 4;
  double pert_scale = 0.25;
  std::vector<int> bits;

  Index cell_count() const;
  void validate() const;
  /// Every bit set to `bit`, pert_scale = 1 / m.
  static LowerBoundFamilySpec filled(int dim, int grid_m, int bit);
};

/// Generalized normal density proportional to exp(-|x|^(1+beta) / (1+beta))
/// on the real line. Its score -sign(x)|x|^beta is (2^(1-beta), beta)-Hoelder.
struct HolderSpec {
  double beta = 0.5;
  void validate() const;
};

using TargetSpec = std::variant<GaussianMixtureSpec, LowerBoundFamilySpec, HolderSpec>;

class TargetModel;

/// Distribution with exact log-density, score and sampler plus its declared
/// regularity parameters. Immutable and cheap to copy; all members are safe
/// to call concurrently.
class AnalyticTarget {
 public:
  explicit AnalyticTarget(std::shared_ptr<const TargetModel> model);

  Index dim() const;
  double log_density(const Vector& x) const;
  double density(const Vector& x) const;
  Vector score(const Vector& x) const;
  bool has_hessian() const;
  /// Hessian of the log-density. Throws UnsupportedOperation when absent.
  Matrix hessian_log_density(const Vector& x) const;

  /// count x dim matrix of i.i.d. draws. The generator state belongs to the caller.
  Matrix sample(Rng& rng, Index count) const;
  Matrix sample(std::uint64_t seed, Index count) const;

  /// Subgaussian parameter.
  double alpha() const;
  /// Hoelder/Lipschitz constant of the score.
  double lip() const;
  double holder_beta() const;
  const Vector& mean() const;

  const TargetSpec& spec() const;
  std::string_view family() const;
  /// Mixture parameters when the target is Gaussian or a Gaussian mixture.
  const GaussianMixtureSpec* mixture() const;

 private:
  std::shared_ptr<const TargetModel> model_;
};

AnalyticTarget make_gaussian(const Vector& mean, double variance);
AnalyticTarget make_gaussian(double mean, double variance);
AnalyticTarget make_gmm(const GaussianMixtureSpec& spec);
AnalyticTarget make_lower_bound_target(const LowerBoundFamilySpec& spec);
AnalyticTarget make_holder_target(const HolderSpec& spec);
AnalyticTarget make_target(const TargetSpec& spec);

/// Gaussian smoothing rho * N(0, h I) in closed form (Gaussian/GMM only).
GaussianMixtureSpec convolve_gaussian(const GaussianMixtureSpec& spec, double h);
AnalyticTarget convolve_gaussian(const AnalyticTarget& target, double h);

/// Central-difference gradient of the log-density.
Vector score_by_finite_difference(const AnalyticTarget& target, const Vector& x, double step);

/// Largest |eigenvalue| of the log-density Hessian over all of R^d, from the
/// spread of the component means: max(1/s2, D^2/(4 s2^2) - 1/s2).
double gmm_lipschitz_bound(const GaussianMixtureSpec& spec);
/// sqrt(variance + D^2/4), D the diameter of the component means.
double gmm_subgaussian_alpha(const GaussianMixtureSpec& spec);

/// Sinusoid bump on [0, 1] with zero integral and w(0) = w(1/2) = w(1) = 0.
double sinusoid_kernel(double x);
double sinusoid_kernel_derivative(double x);
double sinusoid_kernel_second_derivative(double x);

/// Greedy random code in {0,1}^length with pairwise Hamming distance at least
/// min_distance. Stops after max_codewords or `attempts` rejected draws.
std::vector<std::vector<int>> gilbert_varshamov_packing(int length, int min_distance, int max_codewords,
                                                        int attempts, Rng& rng);

int hamming_distance(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace ebscore
