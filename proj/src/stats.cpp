// SPDX-License-Identifier: Apache-2.0
#include "vlg/stats.hpp"

#include <cmath>

namespace vlg {

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {

// Continued fraction for I_x(a,b) (modified Lentz).
double incomplete_beta_cf(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double tol = 1e-16;
  constexpr int max_terms = 200000;

  auto numer = [x, a, b](int n) -> double {
    if (n % 2 == 0) {
      const double m = n / 2;
      return m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
    }
    const double m = (n - 1) / 2;
    return -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
  };

  double f = 1.0;  // denom(0)
  double c = f;
  double d = 0.0;
  for (int n = 1; n < max_terms; ++n) {
    const double an = numer(n);
    d = 1.0 + an * d;
    if (d == 0.0) d = tiny;
    c = 1.0 + an / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double mult = c * d;
    f *= mult;
    if (std::fabs(mult - 1.0) <= tol) break;
  }
  return f;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0))
    throw ValidationError("incomplete beta requires a > 0 and b > 0");
  if (!(x >= 0.0 && x <= 1.0))
    throw ValidationError("incomplete beta requires x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) -
                                log_beta(a, b));
  // Use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) where the fraction converges
  // fastest.
  if (x < (a + 1.0) / (a + b + 2.0))
    return front / (a * incomplete_beta_cf(x, a, b));
  return 1.0 - front / (b * incomplete_beta_cf(1.0 - x, b, a));
}

double student_t_pdf(double x, double dof) {
  if (!(dof > 0.0)) throw ValidationError("t-distribution requires dof > 0");
  const double half = 0.5 * (dof + 1.0);
  return std::exp(std::lgamma(half) - std::lgamma(0.5 * dof)) /
         std::sqrt(dof * M_PI) / std::pow(1.0 + x * x / dof, half);
}

double student_t_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw ValidationError("t-distribution requires dof > 0");
  const double tail =
      0.5 * regularized_incomplete_beta(dof / (x * x + dof), 0.5 * dof, 0.5);
  return x >= 0.0 ? 1.0 - tail : tail;
}

double student_t_two_tailed_p(double t, double dof) {
  if (t == 0.0) return 1.0;
  return regularized_incomplete_beta(dof / (t * t + dof), 0.5 * dof, 0.5);
}

TestResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw ValidationError("welch_t requires at least two observations per sample");
  const auto n_a = static_cast<double>(a.size());
  const auto n_b = static_cast<double>(b.size());

  double mean_a = 0.0, mean_b = 0.0;
  for (double v : a) mean_a += v;
  for (double v : b) mean_b += v;
  mean_a /= n_a;
  mean_b /= n_b;

  double var_a = 0.0, var_b = 0.0;
  for (double v : a) var_a += (v - mean_a) * (v - mean_a);
  for (double v : b) var_b += (v - mean_b) * (v - mean_b);
  var_a /= (n_a - 1.0);
  var_b /= (n_b - 1.0);

  TestResult r;
  const double se2 = var_a / n_a + var_b / n_b;
  if (se2 == 0.0) {
    r.degenerate = true;
    r.dof = n_a + n_b - 2.0;
    if (mean_a == mean_b) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_statistic = mean_a > mean_b
                          ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }

  r.t_statistic = (mean_a - mean_b) / std::sqrt(se2);
  const double num = se2 * se2;
  const double den = (var_a / n_a) * (var_a / n_a) / (n_a - 1.0) +
                     (var_b / n_b) * (var_b / n_b) / (n_b - 1.0);
  r.dof = num / den;
  r.p_value = student_t_two_tailed_p(r.t_statistic, r.dof);
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean_std of an empty sample");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace vlg
