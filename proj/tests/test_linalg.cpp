#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "gaf/errors.hpp"
#include "gaf/linalg.hpp"
#include "gradcheck.hpp"

using namespace gaf;
using gaf::testing::random_tensor;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.shape()[0], t.shape()[1]);
  for (std::size_t r = 0; r < t.shape()[0]; ++r)
    for (std::size_t c = 0; c < t.shape()[1]; ++c) m(r, c) = t.at(r, c);
  return m;
}

// Independent oracle: singular values as square roots of the eigenvalues of
// the Gram matrix, descending.
std::vector<double> eigen_singular_values(const Tensor& t) {
  Eigen::MatrixXd a = to_eigen(t);
  if (a.rows() < a.cols()) a.transposeInPlace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.transpose() * a);
  std::vector<double> s;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) s.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i))));
  std::sort(s.rbegin(), s.rend());
  return s;
}

}  // namespace

TEST(Linalg, IdentityHasConditionOne) {
  const Tensor i3 = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto r = condition_number(singular_values(i3));
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  EXPECT_EQ(r.rank, 3u);
}

TEST(Linalg, DiagonalConditionIsRatio) {
  const auto r = condition_number(singular_values(Tensor::matrix({{3, 0}, {0, 1}})));
  EXPECT_NEAR(r.value, 3.0, 1e-14);
}

TEST(Linalg, MatchesEigenGramOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    for (const Shape& shape : {Shape{5, 3}, Shape{3, 5}, Shape{8, 8}, Shape{1, 4}}) {
      const Tensor m = random_tensor(shape, rng);
      const auto ours = singular_values(m).values;
      const auto oracle = eigen_singular_values(m);
      ASSERT_EQ(ours.size(), oracle.size());
      for (std::size_t i = 0; i < ours.size(); ++i) EXPECT_NEAR(ours[i], oracle[i], 1e-9 * oracle[0]);
    }
  }
}

TEST(Linalg, MatchesEigenJacobiSvdOnIllConditioned) {
  // Gram-matrix eigenvalues lose precision below sqrt(eps) * sigma_max, so the
  // wide-range case uses Eigen's own SVD as the oracle.
  std::mt19937_64 rng(5);
  Tensor m = random_tensor({6, 4}, rng);
  for (std::size_t r = 0; r < 6; ++r) m.at(r, 3) *= 1e-7;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  const auto ours = singular_values(m).values;
  for (std::size_t i = 0; i < ours.size(); ++i) {
    EXPECT_NEAR(ours[i], svd.singularValues()(static_cast<Eigen::Index>(i)), 1e-12 * ours[0]);
  }
}

TEST(Linalg, SpectrumIsDescendingNonNegative) {
  std::mt19937_64 rng(9);
  const auto s = singular_values(random_tensor({7, 4}, rng)).values;
  EXPECT_EQ(s.size(), 4u);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i - 1], s[i]);
  EXPECT_GE(s.back(), 0.0);
}

TEST(Linalg, TruncatesBelowRankTolerance) {
  const auto spectrum = SingularSpectrum::from_values({5.0, 2.0, 1e-18}, 3, 3);
  EXPECT_NEAR(spectrum.rank_tolerance, 1e-12 * 5.0 * 3.0, 1e-30);
  const auto r = condition_number(spectrum);
  EXPECT_DOUBLE_EQ(r.value, 2.5);
  EXPECT_EQ(r.rank, 2u);
}

TEST(Linalg, RankDeficientMatrixUsesRetainedValues) {
  // Two identical rows: rank 1.
  const Tensor m = Tensor::matrix({{1, 2, 2}, {1, 2, 2}});
  const auto r = measure_condition(m);
  EXPECT_EQ(r.rank, 1u);
  EXPECT_NEAR(r.value, 1.0, 1e-12);
}

TEST(Linalg, ScalingInvariance) {
  std::mt19937_64 rng(4);
  const Tensor m = random_tensor({6, 3}, rng);
  Tensor scaled = m;
  for (double& v : scaled.data()) v *= 1e4;
  EXPECT_NEAR(measure_condition(scaled).value / measure_condition(m).value, 1.0, 1e-10);
}

TEST(Linalg, TransposeInvariance) {
  std::mt19937_64 rng(12);
  const Tensor m = random_tensor({4, 7}, rng);
  EXPECT_NEAR(measure_condition(m.transposed()).value / measure_condition(m).value, 1.0, 1e-10);
}

TEST(Linalg, OrthogonalMatrixHasConditionOne) {
  const double c = std::cos(0.7), s = std::sin(0.7);
  const Tensor q = Tensor::matrix({{c, -s, 0}, {s, c, 0}, {0, 0, 1}});
  EXPECT_NEAR(measure_condition(q).value, 1.0, 1e-12);
}

TEST(Linalg, ConditionAtLeastOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    EXPECT_GE(measure_condition(random_tensor({5, 5}, rng)).value, 1.0);
  }
}

TEST(Linalg, NonFiniteEntriesAreDomainError) {
  Tensor m = Tensor::matrix({{1, 0}, {0, 1}});
  m.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(singular_values(m), DomainError);
  m.at(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(singular_values(m), DomainError);
}

TEST(Linalg, NonMatrixIsDimensionError) {
  EXPECT_THROW(singular_values(Tensor::vector({1, 2, 3})), DimensionError);
}

TEST(Linalg, ZeroMatrixIsDegenerate) {
  const Tensor z(Shape{3, 4}, 0.0);
  EXPECT_THROW(condition_number(singular_values(z)), DegenerateMatrixError);
  const auto r = measure_condition(z);
  EXPECT_TRUE(r.degenerate());
  EXPECT_TRUE(std::isinf(r.value));
}
