#pragma once

#include <cstddef>
#include <vector>

namespace pdac {

double log_sum_exp(const std::vector<double>& logs);

double mean(const std::vector<double>& v);

// Standard error of the mean (sample std / sqrt(n)); 0 for n < 2.
double sem(const std::vector<double>& v);

struct SpearmanResult {
  double rho;
  double p_value;  // two-sided, t approximation with n-2 dof
  std::size_t n;
};

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y);

struct QuartileSummary {
  double min;
  double q1;
  double median;
  double q3;
  double max;
  std::size_t count;
};

// Linear-interpolation sample quantiles on a copy of v.
QuartileSummary quartiles(std::vector<double> v);

// Regularized incomplete beta I_x(a, b), used for the Student-t tail.
double incomplete_beta(double a, double b, double x);

double student_t_two_sided_p(double t, double dof);

}  // namespace pdac
