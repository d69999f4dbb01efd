#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cgnn/error.hpp"
#include "cgnn/stats.hpp"

namespace cgnn {
namespace {

// I_x(a, b) from the hypergeometric series
//   x^a (1-x)^b / (a B(a,b)) * sum_n (a+b)_n / (a+1)_n x^n,
// independent of the continued fraction used by the library.
double IncompleteBetaSeries(double x, double a, double b) {
  const double log_front = a * std::log(x) + b * std::log1p(-x) - std::log(a) -
                           (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 100000; ++n) {
    term *= (a + b + n) / (a + 1.0 + n) * x;
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return std::exp(log_front) * sum;
}

double KsUniformStatistic(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    d = std::max({d, (i + 1) / n - p[i], p[i] - i / n});
  return d;
}

Vector Gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = dist(rng);
  return v;
}

TEST(IncompleteBeta, MatchesSeriesOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(0.02, 0.6), uab(0.3, 30.0);
  for (int k = 0; k < 20; ++k) {
    const double x = ux(rng), a = uab(rng), b = uab(rng);
    const double oracle = IncompleteBetaSeries(x, a, b);
    EXPECT_NEAR(RegularizedIncompleteBeta(x, a, b), oracle, 1e-12 * std::max(1.0, oracle)) << x << " " << a << " " << b;
  }
}

TEST(IncompleteBeta, ReflectionIdentity) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ux(0.0, 1.0), uab(0.1, 50.0);
  for (int k = 0; k < 200; ++k) {
    const double x = ux(rng), a = uab(rng), b = uab(rng);
    EXPECT_NEAR(RegularizedIncompleteBeta(x, a, b) + RegularizedIncompleteBeta(1.0 - x, b, a), 1.0, 1e-12);
  }
}

TEST(IncompleteBeta, Endpoints) {
  EXPECT_EQ(RegularizedIncompleteBeta(0.0, 2.0, 3.0), 0.0);
  EXPECT_EQ(RegularizedIncompleteBeta(1.0, 2.0, 3.0), 1.0);
  EXPECT_NEAR(RegularizedIncompleteBeta(0.5, 7.0, 7.0), 0.5, 1e-14);
}

TEST(StudentT, ClosedFormsForOneAndTwoDof) {
  EXPECT_NEAR(StudentTTwoSidedPValue(1.0, 1.0), 0.5, 1e-14);
  for (double t : {0.1, 0.7, 2.0, 9.0}) {
    // Cauchy: 1 - 2 atan(|t|) / pi; dof 2: 1 - |t| / sqrt(2 + t^2)
    EXPECT_NEAR(StudentTTwoSidedPValue(t, 1.0), 1.0 - 2.0 * std::atan(t) / std::numbers::pi, 1e-13);
    EXPECT_NEAR(StudentTTwoSidedPValue(-t, 2.0), 1.0 - t / std::sqrt(2.0 + t * t), 1e-13);
  }
}

TEST(StudentT, LargeDofApproachesNormal) {
  // 2 * (1 - Phi(1.959963984540054)) = 0.05
  EXPECT_NEAR(StudentTTwoSidedPValue(1.959963984540054, 1e7), 0.05, 1e-6);
}

TEST(ParCorrPValue, CenterSymmetryAndLimits) {
  EXPECT_DOUBLE_EQ(ParCorrPValue(0.0, 50, 2), 1.0);
  EXPECT_EQ(ParCorrPValue(1.0, 50, 2), 0.0);
  EXPECT_EQ(ParCorrPValue(-1.0, 50, 2), 0.0);
  for (double r : {0.05, 0.3, 0.8}) EXPECT_EQ(ParCorrPValue(r, 40, 1), ParCorrPValue(-r, 40, 1));
  double prev = 1.0;
  for (double r = 0.01; r < 1.0; r += 0.01) {
    const double p = ParCorrPValue(r, 30, 3);
    EXPECT_LE(p, prev);
    EXPECT_GE(p, 0.0);
    prev = p;
  }
  EXPECT_THROW(ParCorrPValue(0.1, 4, 2), Error);
}

TEST(PartialCorrelation, HandCases) {
  Vector x(4), y(4);
  x << 1, 2, 3, 4;
  y << 2, 4, 6, 8;
  const Matrix none(4, 0);
  EXPECT_NEAR(PartialCorrelation(x, y, none), 1.0, 1e-12);
  EXPECT_NEAR(PartialCorrelation(x, x, none), 1.0, 1e-12);
  EXPECT_NEAR(PartialCorrelation(x, -y, none), -1.0, 1e-12);
}

TEST(PartialCorrelation, EmptyConditioningEqualsPearson) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 20; ++k) {
    const Vector x = Gaussian(50, rng), y = Gaussian(50, rng) + 0.5 * x;
    EXPECT_NEAR(PartialCorrelation(x, y, Matrix(50, 0)),
                PearsonCorrelation({x.data(), 50}, {y.data(), 50}), 1e-12);
  }
}

TEST(PartialCorrelation, SingleConditionMatchesRecursionFormula) {
  std::mt19937_64 rng(14);
  for (int k = 0; k < 20; ++k) {
    const Vector z = Gaussian(80, rng);
    const Vector x = Gaussian(80, rng) + 0.8 * z, y = Gaussian(80, rng) - 0.6 * z + 0.3 * x;
    auto r = [](const Vector& a, const Vector& b) { return PearsonCorrelation({a.data(), 80}, {b.data(), 80}); };
    const double rxy = r(x, y), rxz = r(x, z), ryz = r(y, z);
    const double oracle = (rxy - rxz * ryz) / std::sqrt((1 - rxz * rxz) * (1 - ryz * ryz));
    EXPECT_NEAR(PartialCorrelation(x, y, z), oracle, 1e-10);
  }
}

TEST(PartialCorrelation, ConditionalIndependenceShrinksTowardZero) {
  std::mt19937_64 rng(15);
  const std::size_t n = 200;
  double mean_abs = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vector z = Gaussian(n, rng);
    const Vector x = z + Gaussian(n, rng), y = z + Gaussian(n, rng);
    mean_abs += std::abs(PartialCorrelation(x, y, z));
  }
  mean_abs /= 1000.0;
  EXPECT_LT(mean_abs, 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(PartialCorrelation, SingularAndDegenerateInputs) {
  std::mt19937_64 rng(16);
  const Vector x = Gaussian(30, rng), y = Gaussian(30, rng), z = Gaussian(30, rng);
  Matrix dup(30, 2);
  dup << z, 2.0 * z;
  try {
    PartialCorrelation(x, y, dup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSingularDesign);
  }
  try {
    PartialCorrelation(3.0 * z, y, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateSeries);
  }
  EXPECT_FALSE(TryPartialCorrelation(3.0 * z, y, z).has_value());
}

TEST(ParCorrTest, ResultFieldsAreConsistent) {
  std::mt19937_64 rng(17);
  const Vector z = Gaussian(60, rng), x = Gaussian(60, rng), y = Gaussian(60, rng) + x;
  const auto r = ParCorrTest(x, y, z);
  EXPECT_EQ(r.dof, 60 - 2 - 1);
  EXPECT_LE(std::abs(r.statistic), 1.0);
  EXPECT_DOUBLE_EQ(r.pvalue, ParCorrPValue(r.statistic, 60, 1));
}

TEST(ParCorrTest, NullPValuesAreUniform) {
  std::mt19937_64 rng(18);
  std::vector<double> p;
  for (int trial = 0; trial < 2000; ++trial) {
    const Vector x = Gaussian(100, rng), y = Gaussian(100, rng), z = Gaussian(100, rng);
    p.push_back(ParCorrTest(x, y, z).pvalue);
  }
  EXPECT_LT(KsUniformStatistic(p), 0.05);
}

TEST(CorrcoefMatrix, HandCases) {
  Matrix same(2, 3);
  same << 1, 2, 4, 1, 2, 4;
  EXPECT_TRUE(CorrcoefMatrix(same).isApprox(Matrix::Ones(2, 2), 1e-12));
  Matrix anti(2, 3);
  anti << 1, 2, 4, -1, -2, -4;
  EXPECT_NEAR(CorrcoefMatrix(anti)(0, 1), -1.0, 1e-12);
  Matrix flat(2, 3);
  flat << 1, 2, 4, 5, 5, 5;
  EXPECT_THROW(CorrcoefMatrix(flat), Error);
}

TEST(CorrcoefMatrix, MatchesCovarianceFormula) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> dist;
  Matrix f(4, 16);
  for (auto& v : f.reshaped()) v = dist(rng);
  const Matrix c = CorrcoefMatrix(f);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double mi = f.row(i).mean(), mj = f.row(j).mean(), cov = 0, vi = 0, vj = 0;
      for (int k = 0; k < 16; ++k) {
        cov += (f(i, k) - mi) * (f(j, k) - mj);
        vi += (f(i, k) - mi) * (f(i, k) - mi);
        vj += (f(j, k) - mj) * (f(j, k) - mj);
      }
      EXPECT_NEAR(c(i, j), cov / std::sqrt(vi * vj), 1e-12);
    }
  EXPECT_TRUE(c.isApprox(c.transpose(), 0.0));
}

}  // namespace
}  // namespace cgnn
