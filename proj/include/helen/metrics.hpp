#pragma once

#include <span>

namespace helen {

/// Mean binary cross-entropy; probabilities are clipped to [1e-7, 1 - 1e-7].
double logloss(std::span<const double> labels, std::span<const double> probs);

/// Mann-Whitney AUC with average ranks for ties. Needs both classes present.
double auc(std::span<const double> labels, std::span<const double> scores);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-sided
  std::size_t dof = 0;
};

/// Paired Student t-test on d = a - b. All-zero differences give t = 0, p = 1;
/// constant non-zero differences have no variance and throw.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Two-sided p-value of Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

double mean(std::span<const double> x);
/// Unbiased sample variance (n - 1 denominator).
double sample_variance(std::span<const double> x);

}  // namespace helen
