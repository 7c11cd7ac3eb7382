#include "ebscore/metrics.hpp"

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

// H^2 between two univariate normals via the Bhattacharyya coefficient.
double gaussian_hellinger_sq(double m1, double v1, double m2, double v2) {
  const double bc = std::sqrt(2.0 * std::sqrt(v1 * v2) / (v1 + v2)) * std::exp(-(m1 - m2) * (m1 - m2) / (4.0 * (v1 + v2)));
  return 2.0 - 2.0 * bc;
}

GaussianMixtureSpec random_mixture(Rng& rng, Index d) {
  GaussianMixtureSpec spec;
  const int k = 1 + static_cast<int>(rng() % 3);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    spec.weights.push_back(0.2 + rng.uniform());
    total += spec.weights.back();
    spec.means.push_back((standard_normal(rng, d).array() * 1.5).matrix());
  }
  for (double& w : spec.weights) w /= total;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < spec.weights.size(); ++i) sum += spec.weights[i];
  spec.weights.back() = 1.0 - sum;
  spec.variance = 0.3 + rng.uniform();
  return spec;
}

QuadratureGrid box_for(const AnalyticTarget& a, const AnalyticTarget& b) {
  std::vector<double> lo, hi;
  for (Index t = 0; t < a.dim(); ++t) {
    lo.push_back(std::min(a.mean()(t) - 8 * a.alpha(), b.mean()(t) - 8 * b.alpha()));
    hi.push_back(std::max(a.mean()(t) + 8 * a.alpha(), b.mean()(t) + 8 * b.alpha()));
  }
  return QuadratureGrid::box(lo, hi, a.dim() == 1 ? 4096 : 400);
}

}  // namespace

TEST(ScoreLoss, SmoothedGaussianScoreUnderTarget) {
  // E||Y h/(1+h)||^2 under N(0,1) = h^2/(1+h)^2.
  const AnalyticTarget target = make_gaussian(0.0, 1.0);
  const double h = 0.1;
  const MCEstimate loss = score_loss_mc([&](const Vector& y) { return Vector(-y / (1 + h)); }, target, 100000, 1);
  EXPECT_NEAR(loss.value, 0.0082644628099174, 3 * loss.std_error);
  EXPECT_EQ(loss.n_eval, 100000);
  EXPECT_EQ(loss.seed, 1u);
}

TEST(ScoreLoss, ConstantOffset) {
  const AnalyticTarget target = make_gaussian(Vector::Zero(2), 1.0);
  const Vector c = point({0.3, -0.4});
  const MCEstimate loss = score_loss_mc([&](const Vector& y) { return Vector(target.score(y) + c); }, target, 1000, 2);
  EXPECT_NEAR(loss.value, 0.25, 1e-12);
  EXPECT_NEAR(loss.std_error, 0.0, 1e-12);
}

TEST(ScoreLoss, ReproducibleAndValidated) {
  const AnalyticTarget target = make_gaussian(0.0, 1.0);
  const ScoreFunction zero = [](const Vector& y) { return Vector(Vector::Zero(y.size())); };
  EXPECT_EQ(score_loss_mc(zero, target, 500, 9).value, score_loss_mc(zero, target, 500, 9).value);
  EXPECT_NE(score_loss_mc(zero, target, 500, 9).value, score_loss_mc(zero, target, 500, 10).value);
  EXPECT_THROW(score_loss_mc(zero, target, 1, 9), ParameterError);
  const ScoreFunction broken = [](const Vector& y) { return Vector(Vector::Constant(y.size(), std::nan(""))); };
  EXPECT_THROW(score_loss_mc(broken, target, 10, 9), EvaluationError);
}

TEST(RelativeFisher, GaussianPair) {
  const AnalyticTarget p = make_gaussian(0.0, 1.0);
  const AnalyticTarget q = make_gaussian(0.0, 1.1);
  const MCEstimate fi = relative_fisher_mc(score_of(p), score_of(q), sampler_of(p), 100000, 4);
  EXPECT_NEAR(fi.value, 0.0082644628099174, 3 * fi.std_error);
  EXPECT_EQ(relative_fisher_mc(score_of(p), score_of(p), sampler_of(p), 100, 4).value, 0.0);
}

TEST(RelativeFisher, Asymmetric) {
  const AnalyticTarget p = make_gaussian(0.0, 1.0);
  const AnalyticTarget q = make_gaussian(1.0, 4.0);
  const double pq = relative_fisher_mc(score_of(p), score_of(q), sampler_of(p), 50000, 3).value;
  const double qp = relative_fisher_mc(score_of(q), score_of(p), sampler_of(q), 50000, 3).value;
  // Closed forms: E_p (3y/4 + 1/4)^2 = 10/16 and E_q (3y/4 + 1/4)^2 = 52/16.
  EXPECT_NEAR(pq, 0.625, 0.02);
  EXPECT_NEAR(qp, 3.25, 0.1);
}

TEST(Hellinger, ShiftedGaussianClosedForm) {
  const AnalyticTarget p = make_gaussian(0.0, 1.0);
  const AnalyticTarget q = make_gaussian(0.5, 1.0);
  const double exact = 2.0 * (1.0 - std::exp(-0.03125));
  EXPECT_NEAR(exact, 0.0615335310, 1e-10);
  const QuadratureGrid grid = QuadratureGrid::box({-8.0}, {8.5}, 4096);
  EXPECT_NEAR(hellinger_sq_quadrature(log_density_of(p), log_density_of(q), grid), exact, 1e-10);
  const MCEstimate mc = hellinger_sq_mc(log_density_of(p), log_density_of(q), sampler_of(p), 100000, 5);
  EXPECT_NEAR(mc.value, exact, 3 * mc.std_error);
}

TEST(Hellinger, IdenticalDensities) {
  const AnalyticTarget p = make_gmm({{0.4, 0.6}, {point({-1.0}), point({2.0})}, 0.5});
  const QuadratureGrid grid = QuadratureGrid::around(p);
  EXPECT_LE(hellinger_sq_quadrature(log_density_of(p), log_density_of(p), grid), 1e-12);
  EXPECT_EQ(tv_quadrature(log_density_of(p), log_density_of(p), grid), 0.0);
  EXPECT_EQ(chi_sq_quadrature(log_density_of(p), log_density_of(p), grid), 0.0);
  const MCEstimate mc = hellinger_sq_mc(log_density_of(p), log_density_of(p), sampler_of(p), 1000, 1);
  EXPECT_EQ(mc.value, 0.0);
  EXPECT_EQ(kl_mc(log_density_of(p), log_density_of(p), sampler_of(p), 1000, 1).value, 0.0);
}

TEST(Hellinger, ClampedToRange) {
  // Disjoint supports push the raw MC mean toward 2 from either side.
  const AnalyticTarget p = make_gaussian(0.0, 0.01);
  const AnalyticTarget q = make_gaussian(30.0, 0.01);
  const MCEstimate mc = hellinger_sq_mc(log_density_of(p), log_density_of(q), sampler_of(p), 100, 1);
  EXPECT_GE(mc.value, 0.0);
  EXPECT_LE(mc.value, 2.0);
  EXPECT_NEAR(mc.value, 2.0, 1e-12);
}

TEST(Hellinger, SymmetricOnGrid) {
  Rng rng(13);
  for (int i = 0; i < 5; ++i) {
    const AnalyticTarget a = make_gmm(random_mixture(rng, 2));
    const AnalyticTarget b = make_gmm(random_mixture(rng, 2));
    const QuadratureGrid grid = box_for(a, b);
    EXPECT_NEAR(hellinger_sq_quadrature(log_density_of(a), log_density_of(b), grid),
                hellinger_sq_quadrature(log_density_of(b), log_density_of(a), grid), 1e-12);
  }
}

TEST(Hellinger, MonteCarloAgreesWithQuadrature) {
  Rng rng(77);
  for (int i = 0; i < 6; ++i) {
    const AnalyticTarget a = make_gmm(random_mixture(rng, 1));
    const AnalyticTarget b = make_gmm(random_mixture(rng, 1));
    const double quad = hellinger_sq_quadrature(log_density_of(a), log_density_of(b), box_for(a, b));
    const MCEstimate mc = hellinger_sq_mc(log_density_of(a), log_density_of(b), sampler_of(a), 20000, 100 + i);
    EXPECT_LE(std::abs(mc.raw_value - quad), 4 * mc.std_error);
  }
}

TEST(TotalVariation, ShiftedGaussian) {
  const AnalyticTarget p = make_gaussian(0.0, 1.0);
  const AnalyticTarget q = make_gaussian(0.5, 1.0);
  EXPECT_NEAR(tv_quadrature(log_density_of(p), log_density_of(q), QuadratureGrid::box({-8.0}, {8.5}, 4096)),
              0.1974126513658474, 1e-4);
}

TEST(TotalVariation, HellingerSandwich) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Index d = 1 + i % 2;
    const AnalyticTarget a = make_gmm(random_mixture(rng, d));
    const AnalyticTarget b = make_gmm(random_mixture(rng, d));
    const QuadratureGrid grid = box_for(a, b);
    const double h2 = hellinger_sq_quadrature(log_density_of(a), log_density_of(b), grid);
    const double tv = tv_quadrature(log_density_of(a), log_density_of(b), grid);
    EXPECT_LE(h2 / 2, tv + 1e-12);
    EXPECT_LE(tv, std::sqrt(h2) + 1e-12);
  }
}

TEST(ChiSquare, GaussianShift) {
  // chi^2(N(mu,1) || N(0,1)) = exp(mu^2) - 1.
  const AnalyticTarget p = make_gaussian(0.3, 1.0);
  const AnalyticTarget q = make_gaussian(0.0, 1.0);
  EXPECT_NEAR(chi_sq_quadrature(log_density_of(p), log_density_of(q), QuadratureGrid::box({-9.0}, {9.0}, 4096)),
              std::expm1(0.09), 1e-10);
}

TEST(KL, GaussianShift) {
  const AnalyticTarget p = make_gaussian(0.3, 1.0);
  const AnalyticTarget q = make_gaussian(0.0, 1.0);
  const MCEstimate kl = kl_mc(log_density_of(p), log_density_of(q), sampler_of(p), 50000, 8);
  EXPECT_NEAR(kl.value, 0.045, 4 * kl.std_error);
}

TEST(Quadrature, CoverageErrorWhenMassEscapes) {
  const AnalyticTarget p = make_gaussian(0.0, 1.0);
  const QuadratureGrid narrow = QuadratureGrid::box({-2.0}, {2.0}, 512);
  EXPECT_THROW(hellinger_sq_quadrature(log_density_of(p), log_density_of(p), narrow), CoverageError);
  EXPECT_THROW(QuadratureGrid::box({0.0}, {-1.0}, 10), ParameterError);
  EXPECT_THROW(QuadratureGrid::box({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, 10), ParameterError);
  EXPECT_THROW(QuadratureGrid::box({0.0, 0.0}, {1.0, 1.0}, 4000), ParameterError);
}

TEST(Quadrature, DefaultBoundsAndMass) {
  const AnalyticTarget p = make_gaussian(point({1.0, -1.0}), 1.0);
  const QuadratureGrid grid = QuadratureGrid::around(p, 0.44);
  EXPECT_EQ(grid.points_per_axis, 512);
  EXPECT_NEAR(grid.lo[0], 1.0 - 8.0 * 1.2, 1e-12);
  EXPECT_NEAR(grid_mass(log_density_of(p), grid), 1.0, 1e-10);
  EXPECT_EQ(QuadratureGrid::around(make_gaussian(0.0, 1.0)).points_per_axis, 4096);
}

TEST(SmoothedEmpiricalHellinger, SinglePointClosedForm) {
  const AnalyticTarget target = make_gaussian(0.0, 1.0);
  const double h = 0.3;
  const std::vector<double> values = smoothed_empirical_hellinger(target, 1, h, 3, 42);
  for (int r = 0; r < 3; ++r) {
    const double x1 = target.sample(derive_seed(42, {1u, static_cast<std::uint64_t>(r)}), 1)(0, 0);
    EXPECT_NEAR(values[static_cast<std::size_t>(r)], gaussian_hellinger_sq(x1, h, 0.0, 1.0 + h), 1e-8);
  }
}

TEST(SmoothedEmpiricalHellinger, DecreasesInN) {
  const AnalyticTarget target = make_gaussian(0.0, 1.0);
  double previous = std::numeric_limits<double>::infinity();
  for (Index n : {250, 1000, 4000}) {
    const std::vector<double> values = smoothed_empirical_hellinger(target, n, 0.1, 50, 7);
    double mean = 0.0;
    for (double v : values) mean += v / values.size();
    EXPECT_LT(mean, previous);
    previous = mean;
  }
}

TEST(SmoothedEmpiricalHellinger, DecreasesWithMoreSmoothing) {
  const AnalyticTarget target = make_gaussian(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix sample = target.sample(seed, 200);
    double previous = std::numeric_limits<double>::infinity();
    for (double h : {0.02, 0.05, 0.1, 0.3, 1.0}) {
      auto est = std::make_shared<const SmoothedEmpirical<double>>(sample, h);
      const double value = hellinger_sq_quadrature(log_density_of(est), log_density_of(convolve_gaussian(target, h)),
                                                   QuadratureGrid::around(target, h));
      EXPECT_LT(value, previous);
      previous = value;
    }
  }
}

TEST(SmoothNumerically, MatchesClosedFormForGaussian) {
  const AnalyticTarget target = make_gaussian(0.0, 1.0);
  const SmoothedTable table = smooth_numerically(target, 0.2, QuadratureGrid::box({-8.0}, {8.0}, 2048));
  const AnalyticTarget exact = convolve_gaussian(target, 0.2);
  for (Index i = 0; i < table.nodes.size(); i += 97) {
    if (std::abs(table.nodes(i)) > 5.0) continue;
    EXPECT_NEAR(table.log_density(i), exact.log_density(point({table.nodes(i)})), 1e-9);
    EXPECT_NEAR(table.score(i), exact.score(point({table.nodes(i)}))(0), 1e-8);
  }
}

TEST(Histogram, ExactSampleHasSmallDistance) {
  const AnalyticTarget target = make_gmm({{0.5, 0.5}, {point({-1.0}), point({1.0})}, 0.25});
  const Matrix draws = target.sample(std::uint64_t{3}, 100000);
  const HistogramComparison cmp = compare_histogram(draws.col(0), target, 64, -4.0, 4.0);
  EXPECT_LT(cmp.tv, 0.02);
  EXPECT_EQ(cmp.empirical.size(), 65u);
  double total = 0.0;
  for (double p : cmp.expected) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
  const HistogramComparison off = compare_histogram((draws.col(0).array() + 1.0).matrix(), target, 64, -4.0, 4.0);
  EXPECT_GT(off.tv, 0.3);
}
