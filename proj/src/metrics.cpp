#include "helen/metrics.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numeric>
#include <vector>

#include "helen/error.hpp"
#include "helen/model.hpp"

namespace helen {

double logloss(std::span<const double> labels, std::span<const double> probs) {
  if (labels.size() != probs.size()) throw ValueError("logloss: length mismatch");
  if (labels.empty()) throw ValueError("logloss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = clip_probability(probs[i]);
    s -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return s / static_cast<double>(labels.size());
}

double auc(std::span<const double> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ValueError("auc: length mismatch");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t end = i;
    while (end < n && scores[order[end]] == scores[order[i]]) ++end;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + end);  // mean of ranks i+1..end
    for (std::size_t r = i; r < end; ++r) {
      if (labels[order[r]] > 0.5) {
        pos_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw ValueError("auc: need at least one positive and one negative label");
  const double np = static_cast<double>(positives);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw ValueError("degrees of freedom must be > 0");
  if (t == 0.0) return 1.0;
  // P(|T| > |t|) = I_{dof / (dof + t^2)}(dof / 2, 1 / 2)
  const double x = dof / (dof + t * t);
  return boost::math::ibeta(dof / 2.0, 0.5, x);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValueError("paired t-test: length mismatch");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) return {0.0, 1.0, d.empty() ? 0 : d.size() - 1};
  if (d.size() < 2) throw ValueError("paired t-test: need at least two pairs");
  const double n = static_cast<double>(d.size());
  const double sd = std::sqrt(sample_variance(d));
  if (sd == 0.0) throw ValueError("paired t-test: differences have zero variance");
  const double t = mean(d) / (sd / std::sqrt(n));
  return {t, student_t_two_sided_p(t, n - 1.0), d.size() - 1};
}

double mean(std::span<const double> x) {
  if (x.empty()) throw ValueError("mean of empty input");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw ValueError("sample variance needs at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace helen
