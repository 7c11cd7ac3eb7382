#pragma once

#include "ebscore/core.hpp"
#include "ebscore/distzoo.hpp"
#include "ebscore/estimator.hpp"
#include "ebscore/kernel.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace ebscore {

/// Step size eta, step count K (horizon T = K eta) and score floor eps.
struct DiffusionSchedule {
  double eta = 0.05;
  int steps = 100;
  double eps = 1e-8;

  double horizon() const { return eta * steps; }
  void validate() const;
};

/// Variance of the OU kernel at time t: 1 - e^(-2t).
inline double ou_variance(double t) { return -std::expm1(-2.0 * t); }

/// Law of e^(-t) X + sqrt(1 - e^(-2t)) Z for a Gaussian or mixture X.
GaussianMixtureSpec ou_marginal(const GaussianMixtureSpec& spec, double t);
AnalyticTarget ou_marginal(const AnalyticTarget& target, double t);

/// Regularized score of the OU-evolved empirical distribution
/// (1/n) sum_i N(e^(-t) X_i, (1 - e^(-2t)) I).
class OUScoreModel {
 public:
  /// eps = 0 disables the floor (plain empirical score).
  OUScoreModel(Matrix sample, double eps);

  Index size() const { return sample_.rows(); }
  Index dim() const { return sample_.cols(); }
  double eps() const { return eps_; }
  const Matrix& sample() const { return sample_; }

  /// Smoothed empirical distribution at time t > 0.
  SmoothedEmpirical<double> at(double t) const;
  Vector score(const SmoothedEmpirical<double>& marginal, const Vector& x) const;

 private:
  Matrix sample_;
  double eps_;
};

/// Score of the evolved empirical distribution at (t, x). Builds the time-t
/// mixture on each call; use OUScoreModel::at for repeated queries.
Vector ou_empirical_score(const OUScoreModel& model, double t, const Vector& x);

/// Score to use at reverse step k (forward time eta (K - k)).
using StepScore = std::function<Vector(int step, const Vector& y)>;

/// One reverse step: e^eta y + 2 (e^eta - 1) s + sqrt(e^(2 eta) - 1) z.
Vector ddpm_update(const Vector& y, const Vector& score, const Vector& noise, double eta);

/// ddpm_update with z drawn from `rng`; throws EvaluationError naming the
/// step if the score is not finite.
Vector ddpm_step(const Vector& y, const ScoreFunction& score, double eta, Rng& rng, int step);

/// Runs K reverse steps from N(0, I) for each output sample. Sample i starts
/// from stream (seed, i, init) and step k draws from stream (seed, i, k), so
/// outputs do not depend on the thread count.
Matrix ddpm_sample(const StepScore& step_score, const DiffusionSchedule& schedule, Index dim, Index n_samples,
                   std::uint64_t seed);
/// Uses the training sample of `model` with the floor schedule.eps.
Matrix ddpm_sample(const OUScoreModel& model, const DiffusionSchedule& schedule, Index n_samples, std::uint64_t seed);
/// Exact scores of the OU marginals of a Gaussian or mixture target.
Matrix ddpm_sample(const AnalyticTarget& target, const DiffusionSchedule& schedule, Index n_samples,
                   std::uint64_t seed);

/// eta = eps_tv^2 / (L^2 d), K = ceil(ln(kl / eps_tv) / eta), eps = n_train^-2.
/// Proportionality constants are 1.
DiffusionSchedule ddpm_schedule_from_target(double eps_tv, double lip, Index d, double kl_to_gaussian, Index n_train);

struct MemorizationStats {
  double threshold = 0.0;
  /// Fraction of outputs whose nearest training point is within threshold.
  double fraction_within = 0.0;
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

/// Nearest-training-point distances of generated points. threshold defaults
/// to 3 sqrt(1 - e^(-2 eta)) when passed as 0.
MemorizationStats memorization_stats(const Matrix& generated, const Matrix& training, double threshold);
double memorization_threshold(double eta);

}  // namespace ebscore
