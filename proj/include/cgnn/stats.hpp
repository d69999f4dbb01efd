#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <Eigen/Dense>

namespace cgnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct CITestResult {
  double statistic = 0.0;  // partial correlation in [-1, 1]
  double pvalue = 1.0;     // two-sided
  int dof = 0;             // n - 2 - |Z|
};

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double RegularizedIncompleteBeta(double x, double a, double b);

// P(|T| >= |t|) for Student-t with `dof` degrees of freedom.
double StudentTTwoSidedPValue(double t, double dof);

double PearsonCorrelation(std::span<const double> x, std::span<const double> y);

// Correlation of the OLS residuals of x and y regressed on [1, Z]. With Z
// empty this is Pearson correlation. Throws kSingularDesign for a rank
// deficient Z and kDegenerateSeries when a residual has no variance.
double PartialCorrelation(const Vector& x, const Vector& y, const Matrix& z);

// Variant for bulk conditional-independence sweeps: collinear conditioning
// sets are absorbed by the ridge term instead of raising, and nullopt means a
// residual had no variance left (x or y is determined by Z).
std::optional<double> TryPartialCorrelation(const Vector& x, const Vector& y, const Matrix& z);

// Two-sided significance of a partial correlation r estimated from n samples
// with k conditioning variables (dof = n - 2 - k).
double ParCorrPValue(double r, std::size_t n, std::size_t k);

CITestResult ParCorrTest(const Vector& x, const Vector& y, const Matrix& z);

// Pearson correlation between the rows of `features` (C x d).
Matrix CorrcoefMatrix(const Matrix& features);

}  // namespace cgnn
