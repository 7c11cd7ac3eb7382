#include "ebscore/diffusion.hpp"

#include "ebscore/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ebscore {
namespace {

constexpr std::uint64_t kInitStream = std::numeric_limits<std::uint64_t>::max();

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void DiffusionSchedule::validate() const {
  require(eta > 0.0 && std::isfinite(eta), "diffusion schedule: eta must be positive");
  require(steps >= 1, "diffusion schedule: steps must be at least 1");
  require(eps >= 0.0 && std::isfinite(eps), "diffusion schedule: eps must be non-negative");
}

GaussianMixtureSpec ou_marginal(const GaussianMixtureSpec& spec, double t) {
  require(t >= 0.0, "ou_marginal: t must be non-negative");
  spec.validate();
  GaussianMixtureSpec out = spec;
  const double decay = std::exp(-t);
  for (Vector& m : out.means) m *= decay;
  out.variance = decay * decay * spec.variance + ou_variance(t);
  return out;
}

AnalyticTarget ou_marginal(const AnalyticTarget& target, double t) {
  const GaussianMixtureSpec* mixture = target.mixture();
  if (mixture == nullptr) {
    throw UnsupportedOperation("ou_marginal: no closed form for family '" + std::string(target.family()) + "'");
  }
  return make_gmm(ou_marginal(*mixture, t));
}

OUScoreModel::OUScoreModel(Matrix sample, double eps) : sample_(std::move(sample)), eps_(eps) {
  require(sample_.rows() >= 1 && sample_.cols() >= 1, "OUScoreModel: empty training sample");
  require(eps >= 0.0 && std::isfinite(eps), "OUScoreModel: eps must be non-negative");
}

SmoothedEmpirical<double> OUScoreModel::at(double t) const {
  require(t > 0.0, "ou_empirical_score: t must be positive");
  return SmoothedEmpirical<double>(std::exp(-t) * sample_, ou_variance(t));
}

Vector OUScoreModel::score(const SmoothedEmpirical<double>& marginal, const Vector& x) const {
  const KernelEvaluation<double> e = marginal.evaluate(x);
  if (eps_ == 0.0) return e.score;
  return floor_factor(e.log_density, std::log(eps_)) * e.score;
}

Vector ou_empirical_score(const OUScoreModel& model, double t, const Vector& x) {
  return model.score(model.at(t), x);
}

Vector ddpm_update(const Vector& y, const Vector& score, const Vector& noise, double eta) {
  const double growth = std::exp(eta);
  return growth * y + 2.0 * std::expm1(eta) * score + std::sqrt(std::expm1(2.0 * eta)) * noise;
}

Vector ddpm_step(const Vector& y, const ScoreFunction& score, double eta, Rng& rng, int step) {
  const Vector s = score(y);
  if (!s.allFinite()) throw EvaluationError("ddpm_step: non-finite score at step " + std::to_string(step));
  return ddpm_update(y, s, standard_normal(rng, y.size()), eta);
}

Matrix ddpm_sample(const StepScore& step_score, const DiffusionSchedule& schedule, Index dim, Index n_samples,
                   std::uint64_t seed) {
  schedule.validate();
  require(dim >= 1, "ddpm_sample: dim must be positive");
  require(n_samples >= 0, "ddpm_sample: negative sample count");
  Matrix out(n_samples, dim);
  parallel_for(static_cast<std::size_t>(n_samples), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng init(derive_seed(seed, {i, kInitStream}));
      Vector y = standard_normal(init, dim);
      for (int k = 0; k < schedule.steps; ++k) {
        Rng noise(derive_seed(seed, {i, static_cast<std::uint64_t>(k)}));
        y = ddpm_step(y, [&](const Vector& x) { return step_score(k, x); }, schedule.eta, noise, k);
      }
      out.row(static_cast<Index>(i)) = y.transpose();
    }
  });
  return out;
}

Matrix ddpm_sample(const OUScoreModel& model, const DiffusionSchedule& schedule, Index n_samples, std::uint64_t seed) {
  schedule.validate();
  std::vector<SmoothedEmpirical<double>> marginals;
  marginals.reserve(static_cast<std::size_t>(schedule.steps));
  for (int k = 0; k < schedule.steps; ++k) marginals.push_back(model.at(schedule.eta * (schedule.steps - k)));
  const OUScoreModel floored(model.sample(), schedule.eps);
  return ddpm_sample(
      [&](int k, const Vector& y) { return floored.score(marginals[static_cast<std::size_t>(k)], y); }, schedule,
      model.dim(), n_samples, seed);
}

Matrix ddpm_sample(const AnalyticTarget& target, const DiffusionSchedule& schedule, Index n_samples,
                   std::uint64_t seed) {
  schedule.validate();
  std::vector<AnalyticTarget> marginals;
  marginals.reserve(static_cast<std::size_t>(schedule.steps));
  for (int k = 0; k < schedule.steps; ++k) marginals.push_back(ou_marginal(target, schedule.eta * (schedule.steps - k)));
  return ddpm_sample([&](int k, const Vector& y) { return marginals[static_cast<std::size_t>(k)].score(y); },
                     schedule, target.dim(), n_samples, seed);
}

DiffusionSchedule ddpm_schedule_from_target(double eps_tv, double lip, Index d, double kl_to_gaussian, Index n_train) {
  require(eps_tv > 0.0 && eps_tv < 1.0, "ddpm_schedule_from_target: eps_tv must lie in (0, 1)");
  require(lip > 0.0 && d >= 1 && kl_to_gaussian > 0.0, "ddpm_schedule_from_target: inputs must be positive");
  require(n_train >= 1, "ddpm_schedule_from_target: n_train must be positive");
  DiffusionSchedule s;
  s.eta = eps_tv * eps_tv / (lip * lip * static_cast<double>(d));
  s.steps = std::max(1, static_cast<int>(std::ceil(std::log(kl_to_gaussian / eps_tv) / s.eta)));
  const double n = static_cast<double>(n_train);
  s.eps = 1.0 / (n * n);
  return s;
}

double memorization_threshold(double eta) { return 3.0 * std::sqrt(ou_variance(eta)); }

MemorizationStats memorization_stats(const Matrix& generated, const Matrix& training, double threshold) {
  require(training.rows() >= 1, "memorization_stats: empty training set");
  require(generated.rows() == 0 || generated.cols() == training.cols(), "memorization_stats: dimension mismatch");
  require(threshold > 0.0, "memorization_stats: threshold must be positive");
  MemorizationStats stats;
  stats.threshold = threshold;
  if (generated.rows() == 0) return stats;

  const Index d = training.cols();
  std::vector<double> sorted_train;
  if (d == 1) {
    sorted_train.assign(training.data(), training.data() + training.rows());
    std::sort(sorted_train.begin(), sorted_train.end());
  }
  std::vector<double> distance(static_cast<std::size_t>(generated.rows()));
  parallel_for(distance.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = static_cast<Index>(i);
      if (d == 1) {
        const double x = generated(r, 0);
        const auto it = std::lower_bound(sorted_train.begin(), sorted_train.end(), x);
        double best = std::numeric_limits<double>::infinity();
        if (it != sorted_train.end()) best = *it - x;
        if (it != sorted_train.begin()) best = std::min(best, x - *std::prev(it));
        distance[i] = best;
      } else {
        distance[i] = std::sqrt((training.rowwise() - generated.row(r)).rowwise().squaredNorm().minCoeff());
      }
    }
  });
  double within = 0.0;
  double total = 0.0;
  for (double v : distance) {
    within += v <= threshold;
    total += v;
  }
  const auto count = static_cast<double>(distance.size());
  stats.fraction_within = within / count;
  stats.mean = total / count;
  std::sort(distance.begin(), distance.end());
  stats.min = distance.front();
  stats.q25 = quantile(distance, 0.25);
  stats.median = quantile(distance, 0.5);
  stats.q75 = quantile(distance, 0.75);
  stats.max = distance.back();
  return stats;
}

}  // namespace ebscore
