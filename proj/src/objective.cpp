#include "helen/objective.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "helen/error.hpp"

namespace helen {

void accumulate(GradMap& acc, const GradMap& g) {
  acc.axpy(1.0, g);
  auto touched = acc.touched();
  for (std::size_t j = 0; j < touched.size(); ++j) {
    touched[j].insert(touched[j].end(), g.touched()[j].begin(), g.touched()[j].end());
  }
  acc.set_touched(std::move(touched));
}

GraphObjective::GraphObjective(std::vector<CompGraph> graphs) : graphs_(std::move(graphs)) {
  if (graphs_.empty()) throw ValueError("objective needs at least one graph");
  layout_ = std::make_shared<const Layout>(graphs_.front().layout());
  for (const auto& g : graphs_) {
    if (!(g.layout() == *layout_)) throw ValueError("graphs of one objective must share a layout");
  }
}

double GraphObjective::loss(const ParamSpace& params) {
  double total = 0.0;
  for (auto& g : graphs_) total += g.forward(params);
  return total;
}

GradMap GraphObjective::compute_gradient(const ParamSpace& params, double* loss_out) {
  double total = 0.0;
  GradMap grad(params.layout_ptr());
  for (std::size_t i = 0; i < graphs_.size(); ++i) {
    total += graphs_[i].forward(params);
    if (i == 0) {
      grad = graphs_[i].backward();
    } else {
      accumulate(grad, graphs_[i].backward());
    }
  }
  if (loss_out) *loss_out = total;
  return grad;
}

QuadraticObjective::QuadraticObjective(LayoutPtr layout, std::vector<double> a, std::vector<double> b)
    : layout_(std::move(layout)), a_(std::move(a)), b_(std::move(b)) {
  const std::size_t n = layout_->total();
  if (a_.size() != n * n) throw ValueError("quadratic matrix size does not match layout");
  if (b_.empty()) b_.assign(n, 0.0);
  if (b_.size() != n) throw ValueError("quadratic linear term size does not match layout");
}

double QuadraticObjective::loss(const ParamSpace& params) {
  const std::size_t n = layout_->total();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t k = 0; k < n; ++k) row += a_[i * n + k] * params[k];
    s += 0.5 * params[i] * row + b_[i] * params[i];
  }
  return s;
}

GradMap QuadraticObjective::compute_gradient(const ParamSpace& params, double* loss_out) {
  const std::size_t n = layout_->total();
  GradMap g(layout_);
  for (std::size_t i = 0; i < n; ++i) {
    double row = b_[i];
    for (std::size_t k = 0; k < n; ++k) row += a_[i * n + k] * params[k];
    g[i] = row;
  }
  g.touch_all();
  if (loss_out) *loss_out = loss(params);
  return g;
}

GradCheckResult grad_check(Objective& objective, const ParamSpace& params, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ValueError("grad_check step must be > 0");
  const GradMap analytic = objective.gradient(params);
  const Layout& layout = params.layout();

  std::set<std::size_t> coords;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, layout.total() - 1);
  const std::size_t want = std::min(options.random_coords, layout.total());
  while (coords.size() < want) coords.insert(pick(rng));
  for (std::size_t j = 0; j < layout.num_fields(); ++j) {
    for (std::uint32_t k : analytic.touched()[j]) {
      const std::size_t off = layout.offset(BlockId::embed(static_cast<std::uint32_t>(j), k));
      for (std::size_t c = 0; c < layout.block_dim(); ++c) coords.insert(off + c);
    }
  }

  ParamSpace probe = params;
  GradCheckResult result;
  for (std::size_t i : coords) {
    const double w = params[i];
    const std::uint64_t here = objective.regime(params);
    double h = options.step * std::max(1.0, std::abs(w));
    // shrink the step while w +- h straddles a ReLU kink
    for (int retry = 0; retry < options.kink_retries; ++retry) {
      probe[i] = w + h;
      const bool up_same = objective.regime(probe) == here;
      probe[i] = w - h;
      const bool down_same = objective.regime(probe) == here;
      probe[i] = w;
      if (up_same && down_same) break;
      h *= 0.1;
      ++result.kink_retries;
    }
    probe[i] = w + h;
    const double up = objective.loss(probe);
    probe[i] = w - h;
    const double down = objective.loss(probe);
    probe[i] = w;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
    }
  }
  result.coords_checked = coords.size();
  return result;
}

GradMap hvp(Objective& objective, const ParamSpace& params, const GradMap& v, double delta) {
  if (!params.congruent(v)) throw ValueError("hvp direction does not match parameter layout");
  const double vnorm = v.norm();
  GradMap out(params.layout_ptr());
  if (vnorm == 0.0) return out;
  double h = delta / std::max(vnorm, 1e-300);

  ParamSpace shifted = params;
  const std::uint64_t here = objective.regime(params);
  for (int retry = 0; retry < 3; ++retry) {
    shifted.axpy(h, v);
    const bool up_same = objective.regime(shifted) == here;
    shifted.assign(params.values());
    shifted.axpy(-h, v);
    const bool down_same = objective.regime(shifted) == here;
    shifted.assign(params.values());
    if (up_same && down_same) break;
    h *= 0.1;
  }
  shifted.axpy(h, v);
  GradMap plus = objective.gradient(shifted);
  shifted.assign(params.values());
  shifted.axpy(-h, v);
  GradMap minus = objective.gradient(shifted);

  const double inv = 1.0 / (2.0 * h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (plus[i] - minus[i]) * inv;
  auto touched = plus.touched();
  for (std::size_t j = 0; j < touched.size(); ++j) {
    touched[j].insert(touched[j].end(), minus.touched()[j].begin(), minus.touched()[j].end());
  }
  out.set_touched(std::move(touched));
  return out;
}

}  // namespace helen

namespace helen {

std::uint64_t GraphObjective::regime(const ParamSpace& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto& g : graphs_) {
    g.forward(params);
    h = (h ^ g.relu_signature()) * 0x100000001b3ULL;
  }
  return h;
}

GradMap Objective::exact_hvp(const ParamSpace&, const GradMap&) {
  throw UsageError("this objective has no exact Hessian-vector product");
}

GradMap GraphObjective::exact_hvp(const ParamSpace& params, const GradMap& v) {
  GradMap out(params.layout_ptr());
  for (std::size_t i = 0; i < graphs_.size(); ++i) {
    if (i == 0) {
      out = graphs_[i].hessian_vector(params, v);
    } else {
      accumulate(out, graphs_[i].hessian_vector(params, v));
    }
  }
  return out;
}

GradMap QuadraticObjective::exact_hvp(const ParamSpace& params, const GradMap& v) {
  if (!params.congruent(v)) throw ValueError("hvp direction does not match parameter layout");
  const std::size_t n = layout_->total();
  GradMap out(layout_);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t k = 0; k < n; ++k) row += a_[i * n + k] * v[k];
    out[i] = row;
  }
  out.touch_all();
  return out;
}

std::string to_string(HvpMethod method) {
  return method == HvpMethod::Exact ? "exact" : "finite_difference";
}

HvpMethod parse_hvp_method(const std::string& name) {
  if (name == "exact") return HvpMethod::Exact;
  if (name == "finite_difference") return HvpMethod::FiniteDifference;
  throw ValueError("unknown hvp method '" + name + "' (expected exact or finite_difference)");
}

GradMap hvp(Objective& objective, const ParamSpace& params, const GradMap& v, HvpMethod method, double delta) {
  if (method == HvpMethod::FiniteDifference) return hvp(objective, params, v, delta);
  return objective.exact_hvp(params, v);
}

}  // namespace helen
