#include "ebscore/diffusion.hpp"
#include "ebscore/metrics.hpp"
#include "ebscore/parallel.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ebscore;

namespace {

Vector point(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double value : values) v(i++) = value;
  return v;
}

GaussianMixtureSpec pair(double center, double variance) {
  return {{0.5, 0.5}, {point({-center}), point({center})}, variance};
}

double variance_of(const Matrix& x) {
  const double mean = x.col(0).mean();
  return (x.col(0).array() - mean).square().sum() / static_cast<double>(x.rows() - 1);
}

}  // namespace

TEST(OUMarginal, StandardNormalIsStationary) {
  for (double t : {0.0, 0.1, 1.0, 7.0}) {
    const GaussianMixtureSpec m = ou_marginal(GaussianMixtureSpec{{1.0}, {point({0.0})}, 1.0}, t);
    EXPECT_NEAR(m.variance, 1.0, 1e-15);
    EXPECT_EQ(m.means[0](0), 0.0);
  }
}

TEST(OUMarginal, LongTimeLimit) {
  const GaussianMixtureSpec m = ou_marginal(pair(3.0, 0.1), 20.0);
  EXPECT_NEAR(m.variance, 1.0, 1e-8);
  EXPECT_NEAR(m.means[1](0), 0.0, 1e-8);
}

TEST(OUMarginal, MixtureAtLogTwo) {
  const GaussianMixtureSpec m = ou_marginal(pair(1.0, 0.25), std::log(2.0));
  EXPECT_NEAR(m.means[0](0), -0.5, 1e-15);
  EXPECT_NEAR(m.means[1](0), 0.5, 1e-15);
  EXPECT_NEAR(m.variance, 0.8125, 1e-15);
  EXPECT_EQ(m.weights, pair(1.0, 0.25).weights);
}

TEST(OUMarginal, Semigroup) {
  const GaussianMixtureSpec base{{0.2, 0.8}, {point({1.0, 2.0}), point({-0.5, 0.3})}, 0.4};
  for (auto [t1, t2] : {std::pair{0.1, 0.2}, std::pair{0.7, 1.3}, std::pair{2.0, 0.05}}) {
    const GaussianMixtureSpec direct = ou_marginal(base, t1 + t2);
    const GaussianMixtureSpec nested = ou_marginal(ou_marginal(base, t1), t2);
    EXPECT_NEAR(direct.variance, nested.variance, 1e-12);
    for (std::size_t k = 0; k < base.means.size(); ++k) {
      EXPECT_LE((direct.means[k] - nested.means[k]).norm(), 1e-12);
    }
  }
}

TEST(OUMarginal, RejectsUnsupportedFamilies) {
  EXPECT_THROW(ou_marginal(make_holder_target({0.5}), 0.3), UnsupportedOperation);
}

TEST(OUScore, SinglePointWithoutFloor) {
  Matrix x1(1, 1);
  x1 << 1.3;
  const OUScoreModel model(x1, 0.0);
  const double t = 0.4;
  for (double x : {-2.0, 0.1, 3.0}) {
    EXPECT_NEAR(ou_empirical_score(model, t, point({x}))(0), (std::exp(-t) * 1.3 - x) / ou_variance(t), 1e-12);
  }
}

TEST(OUScore, MatchesFiniteDifferences) {
  const Matrix sample = make_gaussian(Vector::Zero(2), 1.0).sample(std::uint64_t{5}, 40);
  const OUScoreModel model(sample, 0.0);
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const double t = 0.05 + 2.0 * rng.uniform();
    const Vector x = standard_normal(rng, 2);
    const SmoothedEmpirical<double> marginal = model.at(t);
    Vector fd(2);
    for (Index k = 0; k < 2; ++k) {
      Vector up = x, down = x;
      up(k) += 1e-5;
      down(k) -= 1e-5;
      fd(k) = (log_density(marginal, up) - log_density(marginal, down)) / 2e-5;
    }
    EXPECT_LE((ou_empirical_score(model, t, x) - fd).norm(), 1e-6);
  }
}

TEST(OUScore, LargeTimeIsStandardNormalScore) {
  const Matrix sample = make_gmm(pair(1.0, 0.25)).sample(std::uint64_t{2}, 500);
  const OUScoreModel model(sample, 1e-6);
  for (double x : {-2.0, -0.5, 0.0, 1.0, 2.5}) {
    EXPECT_NEAR(ou_empirical_score(model, 10.0, point({x}))(0), -x, 1e-3);
  }
}

TEST(OUScore, RejectsNonPositiveTime) {
  const OUScoreModel model(Matrix::Zero(3, 1), 1e-6);
  EXPECT_THROW(ou_empirical_score(model, 0.0, point({0.0})), ParameterError);
  EXPECT_THROW(OUScoreModel(Matrix::Zero(3, 1), -1.0), ParameterError);
}

TEST(DdpmStep, ZeroStepIsIdentity) {
  Rng rng(1);
  const ScoreFunction zero = [](const Vector& y) { return Vector(Vector::Zero(y.size())); };
  EXPECT_EQ(ddpm_step(point({0.8, -0.1}), zero, 0.0, rng, 0), point({0.8, -0.1}));
}

TEST(DdpmStep, UpdateFormula) {
  const double eta = 0.05;
  const Vector y = point({0.5});
  const Vector s = point({-0.2});
  const Vector z = point({1.5});
  const double expected = std::exp(eta) * 0.5 + 2.0 * (std::exp(eta) - 1.0) * -0.2 + std::sqrt(std::exp(2 * eta) - 1) * 1.5;
  EXPECT_NEAR(ddpm_update(y, s, z, eta)(0), expected, 1e-15);
}

TEST(DdpmStep, NonFiniteScoreNamesStep) {
  Rng rng(1);
  const ScoreFunction broken = [](const Vector& y) { return Vector(Vector::Constant(y.size(), INFINITY)); };
  try {
    ddpm_step(point({0.0}), broken, 0.05, rng, 17);
    FAIL() << "expected an evaluation error";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(DdpmStep, StationaryVarianceWithExactScore) {
  // y <- (2 - e^eta) y + sqrt(e^(2 eta) - 1) z has stationary variance (e^eta + 1)/(3 - e^eta).
  const double eta = 0.05;
  const double expected = (std::exp(eta) + 1.0) / (3.0 - std::exp(eta));
  EXPECT_NEAR(expected, 1.0526200399, 1e-9);
  Rng rng(99);
  const ScoreFunction exact = [](const Vector& y) { return Vector(-y); };
  Vector y = point({0.0});
  double sum = 0.0;
  double sum_sq = 0.0;
  const int steps = 1000000;
  for (int k = 0; k < steps; ++k) {
    y = ddpm_step(y, exact, eta, rng, k);
    sum += y(0);
    sum_sq += y(0) * y(0);
  }
  const double mean = sum / steps;
  EXPECT_NEAR(sum_sq / steps - mean * mean, expected, 0.01 * expected);
}

TEST(DdpmSample, ExactScoresStandardNormal) {
  const DiffusionSchedule schedule{0.05, 100, 1e-8};
  const Matrix out = ddpm_sample(make_gaussian(0.0, 1.0), schedule, 10000, 4);
  const double v = variance_of(out);
  EXPECT_GE(v, 0.95);
  EXPECT_LE(v, 1.10);
}

TEST(DdpmSample, DeterministicAndThreadIndependent) {
  const Matrix train = make_gaussian(0.0, 1.0).sample(std::uint64_t{8}, 300);
  const OUScoreModel model(train, 1e-6);
  const DiffusionSchedule schedule{0.05, 30, 1.0 / (300.0 * 300.0)};
  set_thread_count(1);
  const Matrix a = ddpm_sample(model, schedule, 64, 5);
  const Matrix b = ddpm_sample(model, schedule, 64, 5);
  set_thread_count(8);
  const Matrix c = ddpm_sample(model, schedule, 64, 5);
  set_thread_count(1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_NE(a, ddpm_sample(model, schedule, 64, 6));
}

TEST(DdpmSample, TrainingOrderDoesNotMatter) {
  const Matrix train = make_gaussian(0.0, 1.0).sample(std::uint64_t{8}, 200);
  const Matrix reversed = train.colwise().reverse();
  const DiffusionSchedule schedule{0.05, 20, 1e-6};
  EXPECT_EQ(ddpm_sample(OUScoreModel(train, 0.0), schedule, 32, 1),
            ddpm_sample(OUScoreModel(reversed, 0.0), schedule, 32, 1));
}

TEST(DdpmSample, UnregularizedScoreMemorizes) {
  const Matrix train = make_gmm(pair(1.0, 0.25)).sample(std::uint64_t{11}, 32);
  const DiffusionSchedule schedule{0.05, 120, 0.0};
  const Matrix out = ddpm_sample(OUScoreModel(train, 0.0), schedule, 2000, 12);
  const MemorizationStats stats = memorization_stats(out, train, memorization_threshold(schedule.eta));
  EXPECT_GE(stats.fraction_within, 0.99);
  EXPECT_NEAR(stats.threshold, 3.0 * std::sqrt(1.0 - std::exp(-0.1)), 1e-15);
}

TEST(DdpmSample, EmptyRequest) {
  const Matrix out = ddpm_sample(make_gaussian(0.0, 1.0), DiffusionSchedule{0.05, 10, 1e-6}, 0, 1);
  EXPECT_EQ(out.rows(), 0);
}

TEST(DdpmSchedule, FromTargetWithUnitConstants) {
  const DiffusionSchedule s = ddpm_schedule_from_target(0.1, 1.0, 1, 1.0, 1000);
  EXPECT_NEAR(s.eta, 0.01, 1e-15);
  EXPECT_EQ(s.steps, 231);
  EXPECT_NEAR(s.horizon(), 2.31, 1e-12);
  EXPECT_DOUBLE_EQ(s.eps, 1e-6);
  const DiffusionSchedule coarse = ddpm_schedule_from_target(0.2, 1.0, 1, 1.0, 1000);
  EXPECT_NEAR(s.eta / coarse.eta, 0.25, 1e-12);
  EXPECT_THROW(ddpm_schedule_from_target(1.0, 1.0, 1, 1.0, 1000), ParameterError);
}

TEST(Memorization, NearestDistances) {
  Matrix train(3, 1);
  train << 0.0, 1.0, 5.0;
  Matrix gen(4, 1);
  gen << 0.1, 0.9, 3.0, -2.0;
  const MemorizationStats stats = memorization_stats(gen, train, 0.5);
  EXPECT_DOUBLE_EQ(stats.fraction_within, 0.5);
  EXPECT_NEAR(stats.min, 0.1, 1e-15);
  EXPECT_NEAR(stats.max, 2.0, 1e-15);
  Matrix train2(2, 2);
  train2 << 0, 0, 3, 4;
  Matrix gen2(1, 2);
  gen2 << 3, 0;
  EXPECT_NEAR(memorization_stats(gen2, train2, 1.0).min, 3.0, 1e-15);
}
