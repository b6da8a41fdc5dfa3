#pragma once

#include <optional>
#include <span>
#include <string>

namespace latentprobe {

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of a Student-t statistic with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct PearsonResult {
  std::size_t n = 0;
  /// nullopt when either input is constant.
  std::optional<double> r;
  std::optional<double> p;
};

/// Pearson correlation with a two-sided t-test p-value. Needs n >= 3 paired values.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);

/// "**" for p < .001, "*" for p < .05, empty otherwise.
std::string significance_stars(std::optional<double> p);

/// Sample standard deviation (n - 1 denominator); nullopt for n < 2.
std::optional<double> sample_sd(std::span<const double> values);

}  // namespace latentprobe
