// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>

#include "vlg/common.hpp"

namespace vlg {

struct TestResult {
  double t_statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
  // Set when both samples have zero variance; p is 1 by convention when the
  // means also coincide.
  bool degenerate = false;
};

struct MeanStd {
  double mean = 0.0;
  std::optional<double> stddev;  // sample (n-1); absent when n == 1
};

double log_beta(double a, double b);

// Regularized incomplete beta I_x(a, b), evaluated with the Lentz continued
// fraction to ~1e-15 relative accuracy.
double regularized_incomplete_beta(double x, double a, double b);

double student_t_pdf(double x, double dof);
double student_t_cdf(double x, double dof);

// Two-tailed p-value for |T| >= |t| under Student-t with the given dof.
double student_t_two_tailed_p(double t, double dof);

// Welch's two-tailed t-test with Welch-Satterthwaite degrees of freedom.
// Each sample needs at least two observations and at least one sample must
// have nonzero variance (otherwise: equal means -> degenerate p=1, unequal
// means -> degenerate p=0).
TestResult welch_t(std::span<const double> a, std::span<const double> b);

MeanStd mean_std(std::span<const double> values);

}  // namespace vlg
