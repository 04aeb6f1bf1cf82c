#pragma once

#include <cstdint>
#include <vector>

namespace s3pool {

// Regularized lower incomplete gamma P(a, x); Q(a, x) = 1 - P(a, x).
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Survival probability P(X >= statistic) for X ~ chi-square(dof).
double chi_square_pvalue(double statistic, int64_t dof);

struct ChiSquareResult {
  double statistic = 0.0;
  int64_t dof = 0;
  double pvalue = 1.0;
};

// Goodness of fit of observed counts against a uniform multinomial.
ChiSquareResult chi_square_uniform(const std::vector<int64_t>& counts);

}  // namespace s3pool
