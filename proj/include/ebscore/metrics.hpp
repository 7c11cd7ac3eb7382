#pragma once

#include "ebscore/core.hpp"
#include "ebscore/distzoo.hpp"
#include "ebscore/estimator.hpp"
#include "ebscore/kernel.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace ebscore {

using LogDensityFunction = std::function<double(const Vector&)>;
/// Draws `count` points (rows) from a distribution using the caller's generator.
using SamplerFunction = std::function<Matrix(Rng&, Index)>;

struct MCEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Index n_eval = 0;
  std::uint64_t seed = 0;
  /// Mean before any clamping; equal to value unless the metric clamps.
  double raw_value = 0.0;
};

/// Tensor midpoint grid on a box, d <= 2, at most 1e7 nodes.
struct QuadratureGrid {
  std::vector<double> lo;
  std::vector<double> hi;
  int points_per_axis = 0;

  Index dim() const { return static_cast<Index>(lo.size()); }
  Index size() const;
  double cell_volume() const;
  /// Midpoint of cell `flat`; axis 0 varies fastest.
  Vector node(Index flat) const;
  void validate() const;

  static QuadratureGrid box(std::vector<double> lo, std::vector<double> hi, int points_per_axis);
  /// mean +/- 8 sqrt(alpha^2 + h) per axis; 4096 (d = 1) or 512 (d = 2) points by default.
  static QuadratureGrid around(const AnalyticTarget& target, double h = 0.0, int points_per_axis = 0);
};

LogDensityFunction log_density_of(const AnalyticTarget& target);
LogDensityFunction log_density_of(std::shared_ptr<const SmoothedEmpirical<double>> est);
SamplerFunction sampler_of(const AnalyticTarget& target);
ScoreFunction score_of(const AnalyticTarget& target);

/// E_{Y ~ target} ||shat(Y) - score(Y)||^2.
MCEstimate score_loss_mc(const ScoreFunction& shat, const AnalyticTarget& target, Index n_eval, std::uint64_t seed);

/// E_{Y ~ weight} ||shat(Y) - s_ref(Y)||^2.
MCEstimate score_loss_weighted(const ScoreFunction& shat, const ScoreFunction& s_ref, const AnalyticTarget& weight,
                               Index n_eval, std::uint64_t seed);

/// Relative Fisher information E_p ||grad log p - grad log q||^2.
MCEstimate relative_fisher_mc(const ScoreFunction& p_score, const ScoreFunction& q_score,
                              const SamplerFunction& sampler_p, Index n_eval, std::uint64_t seed);

/// 2 - 2 E_p sqrt(q/p), clamped to [0, 2]; raw_value keeps the unclamped mean.
MCEstimate hellinger_sq_mc(const LogDensityFunction& p, const LogDensityFunction& q, const SamplerFunction& sampler_p,
                           Index n_eval, std::uint64_t seed);

/// E_p [log p - log q].
MCEstimate kl_mc(const LogDensityFunction& p, const LogDensityFunction& q, const SamplerFunction& sampler_p,
                 Index n_eval, std::uint64_t seed);

/// Mass of exp(log_p) on the grid.
double grid_mass(const LogDensityFunction& p, const QuadratureGrid& grid);

/// Quadrature divergences. Each throws CoverageError when either density
/// places more than 1e-6 of its mass outside the grid.
double hellinger_sq_quadrature(const LogDensityFunction& p, const LogDensityFunction& q, const QuadratureGrid& grid);
double tv_quadrature(const LogDensityFunction& p, const LogDensityFunction& q, const QuadratureGrid& grid);
/// int (p - q)^2 / q.
double chi_sq_quadrature(const LogDensityFunction& p, const LogDensityFunction& q, const QuadratureGrid& grid);

/// int ||s1 - s2||^2 w over the grid, or the unweighted integral when
/// `weight` is empty. No coverage check.
double score_distance_quadrature(const ScoreFunction& s1, const ScoreFunction& s2, const LogDensityFunction& weight,
                                 const QuadratureGrid& grid);

/// H^2(rho_hat_h, rho_h) by quadrature for one drawn sample per replicate.
/// The target must have a closed-form Gaussian smoothing.
std::vector<double> smoothed_empirical_hellinger(const AnalyticTarget& target, Index n, double h, int replicates,
                                                 std::uint64_t seed);

/// Density and score of rho * N(0, h) tabulated on a 1-D grid by direct
/// convolution; works for every one-dimensional target.
struct SmoothedTable {
  Vector nodes;
  Vector log_density;
  Vector score;
};
SmoothedTable smooth_numerically(const AnalyticTarget& target, double h, const QuadratureGrid& grid);

/// Bin-probability comparison of a 1-D sample with a target: 64 equal bins on
/// [lo, hi] plus one bin for everything outside. Bin probabilities of the
/// target come from quadrature with `subdivisions` midpoints per bin.
struct HistogramComparison {
  double tv = 0.0;
  double hellinger_sq = 0.0;
  std::vector<double> empirical;
  std::vector<double> expected;
};
HistogramComparison compare_histogram(const Vector& samples, const AnalyticTarget& target, int bins, double lo,
                                      double hi, int subdivisions = 256);

}  // namespace ebscore
