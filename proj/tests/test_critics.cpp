#include <gtest/gtest.h>

#include <Eigen/QR>

#include "fdd/critics.hpp"
#include "fdd/rng.hpp"
#include "oracles.hpp"

using namespace fdd;

namespace {

FeatureSet random_features(std::size_t n, std::size_t d, Rng& rng,
                           double shift = 0.0, double scale = 1.0) {
  std::normal_distribution<double> g(0, 1);
  FeatureSet f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) = shift + scale * g(rng);
  return f;
}

FeatureSet reversed_rows(const FeatureSet& f) {
  return f.colwise().reverse();
}

}  // namespace

TEST(Frechet, ClosedFormForDiagonalGaussians) {
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(-3, 3), s(0.1, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 6;
    GaussianSummary a{Vector(d), Matrix::Zero(d, d)}, b{Vector(d), Matrix::Zero(d, d)};
    std::vector<double> mu1, mu2, s1, s2;
    for (int i = 0; i < d; ++i) {
      mu1.push_back(u(rng));
      mu2.push_back(u(rng));
      s1.push_back(s(rng));
      s2.push_back(s(rng));
      a.mu(i) = mu1.back();
      b.mu(i) = mu2.back();
      a.sigma(i, i) = s1.back() * s1.back();
      b.sigma(i, i) = s2.back() * s2.back();
    }
    const double expect = test::frechet_diagonal(mu1, s1, mu2, s2);
    EXPECT_NEAR(frechet_distance(a, b), expect, 1e-8 * std::max(1.0, expect));
  }
}

TEST(Frechet, IdenticalSetsGiveZero) {
  Rng rng = make_rng(2);
  const FeatureSet f = random_features(40, 8, rng);
  EXPECT_EQ(frechet_distance(f, f), 0.0);
}

TEST(Frechet, SymmetricAndPermutationInvariant) {
  Rng rng = make_rng(3);
  const FeatureSet a = random_features(30, 5, rng);
  const FeatureSet b = random_features(25, 5, rng, 0.5, 1.3);
  const double d = frechet_distance(a, b);
  EXPECT_NEAR(frechet_distance(b, a), d, 1e-9 * d);
  EXPECT_NEAR(frechet_distance(reversed_rows(a), b), d, 1e-9 * d);
}

TEST(Frechet, NonnegativeOnRandomPairs) {
  Rng rng = make_rng(4);
  for (int t = 0; t < 20; ++t) {
    const FeatureSet a = random_features(12, 6, rng);
    const FeatureSet b = random_features(12, 6, rng, 0.1);
    EXPECT_GE(frechet_distance(a, b), 0.0);
  }
}

TEST(Frechet, RankDeficientCovarianceIsHandled) {
  // Fewer samples than dimensions: singular covariance.
  Rng rng = make_rng(5);
  const FeatureSet a = random_features(4, 10, rng);
  const FeatureSet b = random_features(4, 10, rng, 0.2);
  const double d = frechet_distance(a, b);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GE(d, 0.0);
}

TEST(Frechet, InputErrors) {
  Rng rng = make_rng(6);
  EXPECT_THROW(frechet_distance(random_features(1, 3, rng), random_features(5, 3, rng)),
               InputError);
  EXPECT_THROW(frechet_distance(random_features(5, 3, rng), random_features(5, 4, rng)),
               DimensionError);
  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 0.5;
  EXPECT_THROW(matrix_sqrt_psd(asym), InputError);
}

TEST(MatrixSqrt, SquaresBack) {
  Rng rng = make_rng(7);
  const FeatureSet f = random_features(20, 4, rng);
  const Matrix s = summarize(f).sigma;
  const Matrix r = matrix_sqrt_psd(s);
  EXPECT_LT((r * r - s).norm(), 1e-10 * s.norm());
}

TEST(Mmd, MatchesBruteForceBitwise) {
  Rng rng = make_rng(8);
  for (int t = 0; t < 20; ++t) {
    const FeatureSet a = random_features(3 + t, 2 + t % 5, rng);
    const FeatureSet b = random_features(4 + (t * 7) % 11, 2 + t % 5, rng, 0.3);
    const double expect = test::mmd2_brute(a, b, {});
    EXPECT_EQ(mmd2_poly(a, b), expect);
    EXPECT_EQ(mmd2_poly(b, a), expect);
  }
}

TEST(Mmd, KnownValueForTinySets) {
  // D = 1, gamma = 1, coef = 1, degree = 1: k(x, y) = xy + 1, so the
  // unbiased MMD reduces to mean_{i!=j} a_i a_j + mean b_i b_j - 2 mean a * mean b.
  FeatureSet a(2, 1), b(2, 1);
  a << 1, 3;
  b << 0, 2;
  // within(a) = 1*3 = 3 (+1), within(b) = 0 (+1), across = 2*1 = 2 (+1).
  EXPECT_DOUBLE_EQ(mmd2_poly(a, b, {1, 1.0, 1.0}), (3 + 1) + (0 + 1) - 2 * (2 + 1));
}

TEST(Mmd, IdenticalSetsAndPermutationInvariance) {
  Rng rng = make_rng(9);
  const FeatureSet a = random_features(20, 6, rng);
  const FeatureSet b = random_features(20, 6, rng, 1.0);
  // The cross term keeps the i == j kernel values that the within-set terms
  // drop, so the unbiased estimate of a set against itself is not zero.
  double diag = 0, all = 0;
  for (Eigen::Index i = 0; i < 20; ++i)
    for (Eigen::Index j = 0; j < 20; ++j) {
      const double k = std::pow(a.row(i).dot(a.row(j)) / 6.0 + 1.0, 3);
      all += k;
      if (i == j) diag += k;
    }
  EXPECT_NEAR(mmd2_poly(a, a), 2 * ((all - diag) / 380.0 - all / 400.0), 1e-10);
  const double d = mmd2_poly(a, b);
  EXPECT_NEAR(mmd2_poly(reversed_rows(a), b), d, 1e-10 * std::abs(d));
  EXPECT_GT(d, 0.0);
}

TEST(Persistence, DeathsEqualPrimMst) {
  Rng rng = make_rng(10);
  for (int t = 0; t < 25; ++t) {
    const FeatureSet x = random_features(2 + t * 2, 1 + t % 8, rng);
    EXPECT_EQ(persistence_0d(x).deaths(), test::prim_mst_weights(x));
  }
}

TEST(Persistence, HandComputedLine) {
  FeatureSet x(4, 1);
  x << 0, 1, 3, 7;
  const auto diagram = persistence_0d(x);
  EXPECT_EQ(diagram.deaths(), (std::vector<double>{1, 2, 4}));
  for (const auto& p : diagram.pairs) EXPECT_EQ(p.first, 0.0);
}

TEST(Persistence, DuplicatePointsDieAtZero) {
  FeatureSet x(3, 2);
  x << 1, 1, 1, 1, 4, 5;
  EXPECT_EQ(persistence_0d(x).deaths(), (std::vector<double>{0, 5}));
}

TEST(Topology, RigidRotationGivesZero) {
  Rng rng = make_rng(11);
  const FeatureSet x = random_features(30, 5, rng);
  const Matrix m = random_features(5, 5, rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(m).householderQ();
  const FeatureSet y = x * q;
  EXPECT_NEAR(topology_distance(x, y), 0.0, 1e-9);
}

TEST(Topology, ScalingChangesDistance) {
  Rng rng = make_rng(12);
  const FeatureSet x = random_features(20, 3, rng);
  const FeatureSet y = 2.0 * x;
  // Every death doubles, so the l2 distance equals the norm of the deaths.
  double norm = 0;
  for (double d : persistence_0d(x).deaths()) norm += d * d;
  EXPECT_NEAR(topology_distance(x, y), std::sqrt(norm), 1e-9);
  EXPECT_NEAR(topology_distance(x, y, std::numeric_limits<double>::infinity()),
              persistence_0d(x).deaths().back(), 1e-9);
}

TEST(Topology, UnequalSizesSubsampleDeterministically) {
  Rng rng = make_rng(13);
  const FeatureSet a = random_features(30, 3, rng);
  const FeatureSet b = random_features(18, 3, rng);
  EXPECT_EQ(topology_distance(a, b, 2, 5), topology_distance(a, b, 2, 5));
  EXPECT_EQ(subsample_rows(a, 18, 1).rows(), 18);
}

TEST(LpDistance, Basics) {
  EXPECT_DOUBLE_EQ(lp_distance({0, 0}, {3, 4}, 2), 5);
  EXPECT_DOUBLE_EQ(lp_distance({0, 0}, {3, 4}, 1), 7);
  EXPECT_THROW(lp_distance({0}, {1}, 0.5), InputError);
}
