#include "helen/hessian.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "helen/error.hpp"

namespace helen {
namespace {

constexpr double kFlat = 1e-250;

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  double nv = 0.0;
  while (nv == 0.0) {
    for (double& x : v) x = normal(rng);
    nv = norm(v);
  }
  for (double& x : v) x /= nv;
  return v;
}

std::uint64_t row_seed(std::uint64_t seed, std::uint32_t field, std::uint32_t feature) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(field) + 1));
  x ^= 0xbf58476d1ce4e5b9ULL * (static_cast<std::uint64_t>(feature) + 1);
  x ^= x >> 31;
  return x;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<double> block_hvp(Objective& objective, const ParamSpace& params, BlockSelector sel,
                              std::span<const double> v, double delta, HvpMethod method) {
  const Layout& layout = params.layout();
  if (v.size() != layout.block_dim()) throw ValueError("block_hvp: direction has the wrong dimension");
  GradMap dir(params.layout_ptr());
  auto b = dir.block(sel.id());
  std::copy(v.begin(), v.end(), b.begin());
  std::vector<std::vector<std::uint32_t>> touched(layout.num_fields());
  touched[sel.field].push_back(sel.feature);
  dir.set_touched(std::move(touched));

  const GradMap hv = hvp(objective, params, dir, method, delta);
  const auto r = hv.block(sel.id());
  return {r.begin(), r.end()};
}

EigenEstimate top_eigenvalue(Objective& objective, const ParamSpace& params, BlockSelector sel,
                             const PowerIterationOptions& options) {
  if (options.max_iters < 1) throw ValueError("max_iters must be >= 1");
  if (!(options.tol > 0.0)) throw ValueError("tol must be > 0");
  std::mt19937_64 rng(options.seed);
  const std::size_t d = params.layout().block_dim();
  std::vector<double> v = random_unit(rng, d);
  bool redrawn = false;
  double prev = 0.0;

  for (std::size_t it = 1; it <= options.max_iters; ++it) {
    std::vector<double> w = block_hvp(objective, params, sel, v, options.hvp_delta, options.hvp_method);
    double nw = norm(w);
    if (nw <= kFlat) {
      if (it == 1 && !redrawn) {
        redrawn = true;
        v = random_unit(rng, d);
        w = block_hvp(objective, params, sel, v, options.hvp_delta, options.hvp_method);
        nw = norm(w);
      }
      if (nw <= kFlat) return {0.0, it, true};
    }
    const double lambda = std::inner_product(v.begin(), v.end(), w.begin(), 0.0);
    if (it > 1 && std::abs(lambda - prev) <= options.tol * std::max(std::abs(lambda), 1e-12)) {
      return {lambda, it, true};
    }
    prev = lambda;
    for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / nw;
  }
  return {prev, options.max_iters, false};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValueError("pearson: length mismatch");
  if (x.size() < 2) throw ValueError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ValueError("pearson: zero variance input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

ScanSummary EigenScanReport::summarize(const std::vector<ScanRow>& rows) {
  std::vector<double> lam;
  std::vector<double> grad;
  std::vector<double> count;
  for (const auto& r : rows) {
    if (!r.converged || r.count == 0) continue;
    lam.push_back(r.lambda);
    grad.push_back(r.grad_norm);
    count.push_back(static_cast<double>(r.count));
  }
  ScanSummary s;
  s.rows_used = lam.size();
  if (lam.size() < 2) return s;
  try {
    s.r_lambda_count = pearson(lam, count);
    s.r_grad_count = pearson(grad, count);
  } catch (const ValueError&) {
    return s;
  }
  const double n = static_cast<double>(lam.size());
  s.mean_lambda = std::accumulate(lam.begin(), lam.end(), 0.0) / n;
  double ss = 0.0;
  for (double l : lam) ss += (l - s.mean_lambda) * (l - s.mean_lambda);
  s.std_lambda = std::sqrt(ss / (n - 1.0));
  s.available = true;
  return s;
}

void EigenScanReport::write_csv(std::ostream& out) const {
  out << "field,feature,count,grad_norm,lambda,iters,converged\n";
  for (const auto& r : rows) {
    out << r.field << ',' << r.feature << ',' << r.count << ',' << fmt(r.grad_norm) << ',' << fmt(r.lambda) << ','
        << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
  }
  out << "# lambda: signed Rayleigh quotient of the magnitude-dominant block eigenvector (power iteration)\n";
  out << "# rows_used," << summary.rows_used << '\n';
  if (!summary.available) {
    out << "# summary,unavailable\n";
    return;
  }
  out << "# r_lambda_count," << fmt(summary.r_lambda_count) << '\n';
  out << "# r_grad_count," << fmt(summary.r_grad_count) << '\n';
  out << "# mean_lambda," << fmt(summary.mean_lambda) << '\n';
  out << "# std_lambda," << fmt(summary.std_lambda) << '\n';
}

EigenScanReport eigen_scan(const CtrModel& model, const ParamSpace& params, const Dataset& eval,
                           const FrequencyTable& freq, std::size_t field, const std::vector<std::uint32_t>& features,
                           const ScanConfig& config) {
  if (features.empty()) throw ValueError("eigen_scan: empty feature subset");
  if (field >= eval.schema.num_fields()) throw ValueError("eigen_scan: field out of range");
  if (eval.samples.empty()) throw ValueError("eigen_scan: empty evaluation set");

  std::vector<std::size_t> rows(eval.size());
  std::iota(rows.begin(), rows.end(), 0);
  if (config.eval_subsample > 0 && config.eval_subsample < rows.size()) {
    std::mt19937_64 rng(config.power.seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(config.eval_subsample);
    std::sort(rows.begin(), rows.end());
  }
  const double denom = static_cast<double>(rows.size());

  std::vector<std::vector<std::size_t>> by_feature(eval.schema.vocab(field));
  for (std::size_t r : rows) by_feature[eval.samples[r].features[field]].push_back(r);

  const auto j = static_cast<std::uint32_t>(field);
  auto compute = [&](std::uint32_t k) {
    if (k >= by_feature.size()) throw ValueError("eigen_scan: feature out of range");
    ScanRow row;
    row.field = j;
    row.feature = k;
    row.count = freq.count(field, k);
    const auto& subset = by_feature[k];
    if (subset.empty()) {
      // no evaluation sample touches this row: zero gradient, zero curvature
      row.iterations = 1;
      row.converged = true;
      return row;
    }
    GraphObjective obj = model.objective(eval, subset, denom, config.chunk);
    const GradMap g = obj.gradient(params);
    const auto gb = g.block(BlockId::embed(j, k));
    row.grad_norm = norm(gb);
    PowerIterationOptions power = config.power;
    power.seed = row_seed(config.power.seed, j, k);
    const EigenEstimate est = top_eigenvalue(obj, params, {j, k}, power);
    row.lambda = est.lambda;
    row.iterations = est.iterations;
    row.converged = est.converged;
    return row;
  };

  EigenScanReport report;
  report.rows.resize(features.size());
  const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, features.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < features.size(); ++i) report.rows[i] = compute(features[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < features.size(); i = next++) {
          try {
            report.rows[i] = compute(features[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  report.summary = EigenScanReport::summarize(report.rows);
  return report;
}

}  // namespace helen
