#include "cgnn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "cgnn/error.hpp"

namespace cgnn {

namespace {

constexpr double kRidge = 1e-10;
constexpr double kBetaTolerance = 1e-14;
constexpr int kBetaMaxIterations = 10000;
constexpr double kTiny = 1e-300;
constexpr double kMaxAbsR = 1.0 - 1e-15;

// Continued fraction for I_x(a,b) (Numerical Recipes form), modified Lentz.
double BetaContinuedFraction(double x, double a, double b) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kBetaTolerance) return h;
  }
  throw Error(ErrorKind::kNumerical, "incomplete beta continued fraction did not converge");
}

// Residuals of y after OLS on the design [1, z].
Vector Residualize(const Vector& y, const Matrix& design, const Eigen::LDLT<Matrix>& gram) {
  const Vector beta = gram.solve(design.transpose() * y);
  return y - design * beta;
}

}  // namespace

double RegularizedIncompleteBeta(double x, double a, double b) {
  CGNN_CHECK(a > 0.0 && b > 0.0, ErrorKind::kContract, "incomplete beta needs a, b > 0");
  CGNN_CHECK(x >= 0.0 && x <= 1.0, ErrorKind::kContract, "incomplete beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * BetaContinuedFraction(x, a, b) / a;
  return 1.0 - front * BetaContinuedFraction(1.0 - x, b, a) / b;
}

double StudentTTwoSidedPValue(double t, double dof) {
  CGNN_CHECK(dof > 0.0, ErrorKind::kContract, "student-t needs positive dof");
  if (std::isinf(t)) return 0.0;
  return RegularizedIncompleteBeta(dof / (dof + t * t), 0.5 * dof, 0.5);
}

double PearsonCorrelation(std::span<const double> x, std::span<const double> y) {
  CGNN_CHECK(x.size() == y.size(), ErrorKind::kDimension, "pearson: length mismatch");
  CGNN_CHECK(x.size() >= 2, ErrorKind::kInsufficientData, "pearson needs at least 2 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  CGNN_CHECK(sxx > 0.0 && syy > 0.0, ErrorKind::kDegenerateSeries, "pearson on a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> TryPartialCorrelation(const Vector& x, const Vector& y, const Matrix& z) {
  const auto n = x.size();
  const auto k = z.cols();
  CGNN_CHECK(n > k + 2, ErrorKind::kInsufficientData, "partial correlation needs n > k + 2");
  Matrix design(n, k + 1);
  design.col(0).setOnes();
  if (k > 0) design.rightCols(k) = z;
  Matrix gram = design.transpose() * design;
  gram.diagonal().array() += kRidge * std::max(1.0, gram.diagonal().maxCoeff());
  const Eigen::LDLT<Matrix> ldlt(gram);
  const Vector rx = Residualize(x, design, ldlt);
  const Vector ry = Residualize(y, design, ldlt);
  const Vector cx = rx.array() - rx.mean();
  const Vector cy = ry.array() - ry.mean();
  const double ssx = cx.squaredNorm(), ssy = cy.squaredNorm();
  if (!(ssx > 1e-16 * x.squaredNorm()) || !(ssy > 1e-16 * y.squaredNorm()) || ssx == 0.0 ||
      ssy == 0.0) {
    return std::nullopt;
  }
  return std::clamp(cx.dot(cy) / std::sqrt(ssx * ssy), -1.0, 1.0);
}

double PartialCorrelation(const Vector& x, const Vector& y, const Matrix& z) {
  const auto n = x.size();
  CGNN_CHECK(y.size() == n && (z.cols() == 0 || z.rows() == n), ErrorKind::kDimension,
             "partial correlation: length mismatch");
  const auto k = z.cols();
  CGNN_CHECK(n > k + 2, ErrorKind::kInsufficientData,
             "partial correlation needs n > k + 2 (n=" + std::to_string(n) +
                 ", k=" + std::to_string(k) + ")");

  Matrix design(n, k + 1);
  design.col(0).setOnes();
  if (k > 0) design.rightCols(k) = z;
  Matrix gram = design.transpose() * design;

  // Rank check on the scale-free Gram matrix; the ridge below would otherwise
  // hide collinear conditioning sets.
  const Vector scale = gram.diagonal().cwiseSqrt();
  CGNN_CHECK((scale.array() > 0.0).all(), ErrorKind::kSingularDesign,
             "conditioning set contains an all-zero column");
  const Matrix normalized = scale.cwiseInverse().asDiagonal() * gram * scale.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(normalized, Eigen::EigenvaluesOnly);
  CGNN_CHECK(eig.eigenvalues().minCoeff() > 1e-12 * static_cast<double>(k + 1),
             ErrorKind::kSingularDesign, "conditioning set is rank deficient");

  gram.diagonal().array() += kRidge;
  const Eigen::LDLT<Matrix> ldlt(gram);
  const Vector rx = Residualize(x, design, ldlt);
  const Vector ry = Residualize(y, design, ldlt);

  const double ssx = rx.squaredNorm(), ssy = ry.squaredNorm();
  CGNN_CHECK(ssx > 1e-20 * x.squaredNorm() && ssx > 0.0, ErrorKind::kDegenerateSeries,
             "residual of x has no variance");
  CGNN_CHECK(ssy > 1e-20 * y.squaredNorm() && ssy > 0.0, ErrorKind::kDegenerateSeries,
             "residual of y has no variance");
  const Vector cx = rx.array() - rx.mean();
  const Vector cy = ry.array() - ry.mean();
  return std::clamp(cx.dot(cy) / std::sqrt(cx.squaredNorm() * cy.squaredNorm()), -1.0, 1.0);
}

double ParCorrPValue(double r, std::size_t n, std::size_t k) {
  CGNN_CHECK(n >= k + 3, ErrorKind::kInsufficientData, "parcorr p-value needs dof >= 1");
  CGNN_CHECK(std::abs(r) <= 1.0, ErrorKind::kContract, "correlation outside [-1,1]");
  if (std::abs(r) == 1.0) return 0.0;
  const double dof = static_cast<double>(n - 2 - k);
  const double rc = std::clamp(r, -kMaxAbsR, kMaxAbsR);
  const double t = rc * std::sqrt(dof / (1.0 - rc * rc));
  return std::clamp(StudentTTwoSidedPValue(t, dof), 0.0, 1.0);
}

CITestResult ParCorrTest(const Vector& x, const Vector& y, const Matrix& z) {
  CITestResult out;
  out.statistic = PartialCorrelation(x, y, z);
  const auto n = static_cast<std::size_t>(x.size());
  const auto k = static_cast<std::size_t>(z.cols());
  out.dof = static_cast<int>(n) - 2 - static_cast<int>(k);
  out.pvalue = ParCorrPValue(out.statistic, n, k);
  return out;
}

Matrix CorrcoefMatrix(const Matrix& features) {
  CGNN_CHECK(features.cols() >= 2, ErrorKind::kInsufficientData,
             "corrcoef needs at least 2 observations per row");
  const Matrix centered = features.colwise() - features.rowwise().mean();
  const Vector norms = centered.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    const double raw = features.row(i).norm();
    CGNN_CHECK(norms(i) > 1e-12 * raw && norms(i) > 0.0, ErrorKind::kDegenerateSeries,
               "corrcoef row " + std::to_string(i) + " is constant");
  }
  Matrix out = (centered * centered.transpose()).array() / (norms * norms.transpose()).array();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out(i, i) = 1.0;
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = std::clamp(out(i, j), -1.0, 1.0);
  }
  return out;
}

}  // namespace cgnn
