#include "helen/optim.hpp"

#include <algorithm>
#include <cmath>

#include "helen/error.hpp"

namespace helen {

std::string to_string(BaseOptimizer v) {
  switch (v) {
    case BaseOptimizer::Sgd: return "sgd";
    case BaseOptimizer::Adam: return "adam";
    case BaseOptimizer::Nadam: return "nadam";
    case BaseOptimizer::Radam: return "radam";
  }
  return "unknown";
}

std::string to_string(Wrapper v) {
  switch (v) {
    case Wrapper::None: return "none";
    case Wrapper::Sam: return "sam";
    case Wrapper::Asam: return "asam";
    case Wrapper::Helen: return "helen";
  }
  return "unknown";
}

std::string to_string(HelenNetMode v) { return v == HelenNetMode::Uniform ? "uniform" : "none"; }
std::string to_string(RadiusNorm v) { return v == RadiusNorm::PerField ? "per_field" : "global"; }

BaseOptimizer parse_base_optimizer(const std::string& s) {
  if (s == "sgd") return BaseOptimizer::Sgd;
  if (s == "adam") return BaseOptimizer::Adam;
  if (s == "nadam") return BaseOptimizer::Nadam;
  if (s == "radam") return BaseOptimizer::Radam;
  throw ValueError("unknown base optimizer '" + s + "' (expected sgd, adam, nadam or radam)");
}

Wrapper parse_wrapper(const std::string& s) {
  if (s == "none") return Wrapper::None;
  if (s == "sam") return Wrapper::Sam;
  if (s == "asam") return Wrapper::Asam;
  if (s == "helen") return Wrapper::Helen;
  throw ValueError("unknown wrapper '" + s + "' (expected none, sam, asam or helen)");
}

HelenNetMode parse_helen_net_mode(const std::string& s) {
  if (s == "uniform") return HelenNetMode::Uniform;
  if (s == "none") return HelenNetMode::None;
  throw ValueError("unknown helen_net_mode '" + s + "' (expected uniform or none)");
}

RadiusNorm parse_radius_norm(const std::string& s) {
  if (s == "per_field") return RadiusNorm::PerField;
  if (s == "global") return RadiusNorm::Global;
  throw ValueError("unknown radius_norm '" + s + "' (expected per_field or global)");
}

void OptimizerSpec::validate() const {
  if (!(lr > 0.0)) throw ValueError("optimizer.lr must be > 0");
  if (!(rho >= 0.0)) throw ValueError("optimizer.rho must be >= 0");
  if (!(xi >= 0.0 && xi <= 1.0)) throw ValueError("optimizer.xi must lie in [0, 1]");
  if (!(weight_decay >= 0.0)) throw ValueError("optimizer.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValueError("optimizer.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValueError("optimizer.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ValueError("optimizer.eps must be > 0");
}

std::string OptimizerSpec::label() const {
  std::string name;
  switch (wrapper) {
    case Wrapper::None: return to_string(base);
    case Wrapper::Sam: name = "sam"; break;
    case Wrapper::Asam: name = "asam"; break;
    case Wrapper::Helen:
      if (helen_net_mode == HelenNetMode::None) {
        name = "helen-m";
      } else {
        name = xi == 0.0 ? "helen-b" : "helen";
      }
      break;
  }
  if (base != BaseOptimizer::Adam) name += "+" + to_string(base);
  return name;
}

// ---------------------------------------------------------------- perturbations

HelenRadii helen_radii(const FrequencyTable& freq, double rho, double xi, RadiusNorm norm) {
  if (!(rho >= 0.0)) throw ValueError("rho must be >= 0");
  if (!(xi >= 0.0 && xi <= 1.0)) throw ValueError("xi must lie in [0, 1]");
  const std::uint64_t global = freq.global_max();
  if (norm == RadiusNorm::Global && global == 0) throw ValueError("frequency table has no non-zero count");
  std::vector<std::vector<double>> radii(freq.num_fields());
  for (std::size_t j = 0; j < freq.num_fields(); ++j) {
    const std::uint64_t denom = norm == RadiusNorm::PerField ? freq.field_max(j) : global;
    if (denom == 0) throw ValueError("field " + std::to_string(j) + " has all-zero frequency counts");
    const auto& counts = freq.field_counts(j);
    radii[j].reserve(counts.size());
    for (std::uint64_t n : counts) {
      const double ratio = static_cast<double>(n) / static_cast<double>(denom);
      radii[j].push_back(rho * std::max(ratio, xi));
    }
  }
  return HelenRadii(std::move(radii));
}

GradMap sam_perturb(const GradMap& grads, double rho) {
  GradMap eps(grads.layout_ptr());
  eps.set_touched(grads.touched());
  const double n = grads.norm();
  if (n < kNormGuard) return eps;
  const double scale = rho / n;
  for (std::size_t i = 0; i < grads.size(); ++i) eps[i] = scale * grads[i];
  return eps;
}

GradMap asam_perturb(const ParamSpace& params, const GradMap& grads, double rho) {
  if (!params.congruent(grads)) throw ValueError("asam_perturb: gradient does not match parameters");
  GradMap eps(grads.layout_ptr());
  eps.set_touched(grads.touched());
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double t = std::abs(params[i]) + 1e-12;
    sq += (t * grads[i]) * (t * grads[i]);
  }
  const double n = std::sqrt(sq);
  if (n < kNormGuard) return eps;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double t = std::abs(params[i]) + 1e-12;
    eps[i] = rho * t * t * grads[i] / n;
  }
  return eps;
}

namespace {

double span_norm(std::span<const double> s) {
  double acc = 0.0;
  for (double v : s) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

GradMap helen_perturb(const GradMap& grads, const HelenRadii& radii, double rho, HelenNetMode net_mode) {
  const Layout& layout = grads.layout();
  if (radii.num_fields() != layout.num_fields()) throw ValueError("helen radii do not match the layout");
  GradMap eps(grads.layout_ptr());
  eps.set_touched(grads.touched());

  if (net_mode == HelenNetMode::Uniform) {
    const auto g = grads.dense();
    const double n = span_norm(g);
    if (n >= kNormGuard) {
      auto e = eps.dense();
      for (std::size_t i = 0; i < g.size(); ++i) e[i] = rho * g[i] / n;
    }
  }
  for (std::size_t j = 0; j < layout.num_fields(); ++j) {
    if (radii.field(j).size() != layout.vocab(j)) throw ValueError("helen radii do not match the layout");
    for (std::uint32_t k : grads.touched()[j]) {
      const auto g = grads.embed(j, k);
      const double n = span_norm(g);
      if (n < kNormGuard) continue;
      auto e = eps.embed(j, k);
      const double r = radii(j, k);
      for (std::size_t c = 0; c < g.size(); ++c) e[c] = r * g[c] / n;
    }
  }
  return eps;
}

// ---------------------------------------------------------------- optimizer

Optimizer::Optimizer(OptimizerSpec spec, LayoutPtr layout, const FrequencyTable* freq)
    : spec_(spec), layout_(std::move(layout)) {
  spec_.validate();
  if (spec_.base != BaseOptimizer::Sgd) {
    state_.m.assign(layout_->total(), 0.0);
    state_.v.assign(layout_->total(), 0.0);
  }
  if (spec_.wrapper == Wrapper::Helen) {
    if (!freq) throw ValueError("helen requires a frequency table");
    if (freq->num_fields() != layout_->num_fields()) throw ValueError("frequency table does not match the layout");
    for (std::size_t j = 0; j < layout_->num_fields(); ++j) {
      if (freq->field_counts(j).size() != layout_->vocab(j)) {
        throw ValueError("frequency table does not match the layout");
      }
    }
    state_.radii = helen_radii(*freq, spec_.rho, spec_.xi, spec_.radius_norm);
  }
}

template <typename F>
void Optimizer::for_each_updated(const GradMap& grads, F&& f) const {
  const Layout& l = *layout_;
  for (std::size_t i = 0; i < l.dense_dim(); ++i) f(i);
  if (spec_.dense_moments) {
    for (std::size_t i = l.dense_dim(); i < l.total(); ++i) f(i);
    return;
  }
  for (std::size_t j = 0; j < l.num_fields(); ++j) {
    for (std::uint32_t k : grads.touched()[j]) {
      const std::size_t off = l.offset(BlockId::embed(static_cast<std::uint32_t>(j), k));
      for (std::size_t c = 0; c < l.block_dim(); ++c) f(off + c);
    }
  }
}

void Optimizer::base_step(ParamSpace& params, const GradMap& grads) {
  if (!params.congruent(grads) || !(params.layout() == *layout_)) {
    throw ValueError("optimizer step: parameters and gradient do not match the optimizer layout");
  }
  const std::uint64_t t = ++state_.step;
  const double td = static_cast<double>(t);
  const double lr = spec_.lr;
  const double wd = spec_.weight_decay;
  const double b1 = spec_.beta1;
  const double b2 = spec_.beta2;
  const double eps = spec_.eps;
  auto& m = state_.m;
  auto& v = state_.v;
  auto grad_at = [&](std::size_t i) { return grads[i] + wd * params[i]; };

  switch (spec_.base) {
    case BaseOptimizer::Sgd:
      for_each_updated(grads, [&](std::size_t i) { params[i] -= lr * grad_at(i); });
      return;
    case BaseOptimizer::Adam: {
      const double bc1 = 1.0 - std::pow(b1, td);
      const double bc2 = 1.0 - std::pow(b2, td);
      for_each_updated(grads, [&](std::size_t i) {
        const double g = grad_at(i);
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      });
      return;
    }
    case BaseOptimizer::Nadam: {
      const double bc2 = 1.0 - std::pow(b2, td);
      const double mu = b1 * (1.0 - 0.5 * std::pow(0.96, td * spec_.momentum_decay));
      const double mu_next = b1 * (1.0 - 0.5 * std::pow(0.96, (td + 1.0) * spec_.momentum_decay));
      state_.mu_product *= mu;
      const double mu_prod = state_.mu_product;
      const double mu_prod_next = mu_prod * mu_next;
      for_each_updated(grads, [&](std::size_t i) {
        const double g = grad_at(i);
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double denom = std::sqrt(v[i] / bc2) + eps;
        params[i] -= lr * (1.0 - mu) / (1.0 - mu_prod) * g / denom;
        params[i] -= lr * mu_next / (1.0 - mu_prod_next) * m[i] / denom;
      });
      return;
    }
    case BaseOptimizer::Radam: {
      const double bc1 = 1.0 - std::pow(b1, td);
      const double bc2 = 1.0 - std::pow(b2, td);
      const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
      const double rho_t = rho_inf - 2.0 * td * std::pow(b2, td) / bc2;
      const bool rectified = rho_t > 5.0;
      const double rect =
          rectified ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                    : 0.0;
      for_each_updated(grads, [&](std::size_t i) {
        const double g = grad_at(i);
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double m_hat = m[i] / bc1;
        if (rectified) {
          const double adaptive = std::sqrt(bc2) / (std::sqrt(v[i]) + eps);
          params[i] -= lr * m_hat * rect * adaptive;
        } else {
          params[i] -= lr * m_hat;
        }
      });
      return;
    }
  }
}

GradMap Optimizer::perturbation(const ParamSpace& params, const GradMap& grads) const {
  switch (spec_.wrapper) {
    case Wrapper::None: {
      GradMap zero(grads.layout_ptr());
      zero.set_touched(grads.touched());
      return zero;
    }
    case Wrapper::Sam: return sam_perturb(grads, spec_.rho);
    case Wrapper::Asam: return asam_perturb(params, grads, spec_.rho);
    case Wrapper::Helen: return helen_perturb(grads, *state_.radii, spec_.rho, spec_.helen_net_mode);
  }
  throw ValueError("unknown wrapper");
}

double Optimizer::step(ParamSpace& params, Objective& objective) {
  double loss = 0.0;
  const GradMap g = objective.gradient(params, &loss);
  if (spec_.wrapper == Wrapper::None) {
    base_step(params, g);
    return loss;
  }
  const GradMap eps = perturbation(params, g);
  const std::vector<double> saved = params.flatten();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (eps[i] != 0.0) params[i] += eps[i];
  }
  const GradMap g_sharp = objective.gradient(params);
  params.assign(saved);
  base_step(params, g_sharp);
  return loss;
}

}  // namespace helen
