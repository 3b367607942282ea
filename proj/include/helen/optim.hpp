#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "helen/data.hpp"
#include "helen/objective.hpp"
#include "helen/param_space.hpp"

namespace helen {

enum class BaseOptimizer : std::uint8_t { Sgd, Adam, Nadam, Radam };
enum class Wrapper : std::uint8_t { None, Sam, Asam, Helen };
enum class HelenNetMode : std::uint8_t { Uniform, None };
enum class RadiusNorm : std::uint8_t { PerField, Global };

std::string to_string(BaseOptimizer v);
std::string to_string(Wrapper v);
std::string to_string(HelenNetMode v);
std::string to_string(RadiusNorm v);
BaseOptimizer parse_base_optimizer(const std::string& s);
Wrapper parse_wrapper(const std::string& s);
HelenNetMode parse_helen_net_mode(const std::string& s);
RadiusNorm parse_radius_norm(const std::string& s);

struct OptimizerSpec {
  BaseOptimizer base = BaseOptimizer::Adam;
  Wrapper wrapper = Wrapper::None;
  double lr = 1e-3;
  double weight_decay = 0.0;  // coupled L2: g += weight_decay * w
  double rho = 0.05;
  double xi = 0.0;
  HelenNetMode helen_net_mode = HelenNetMode::Uniform;
  RadiusNorm radius_norm = RadiusNorm::PerField;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum_decay = 4e-3;  // Nadam momentum schedule
  bool dense_moments = false;    // update every embedding row, not just touched ones

  void validate() const;
  /// Short name used in run records: "adam", "sam", "helen", "helen-m", "helen-b", ...
  std::string label() const;
  bool operator==(const OptimizerSpec&) const = default;
};

/// rho^j_k = rho * max(N^j_k / max N, xi), where max N is taken within the
/// field (PerField) or over the whole table (Global).
class HelenRadii {
 public:
  HelenRadii() = default;
  explicit HelenRadii(std::vector<std::vector<double>> radii) : radii_(std::move(radii)) {}

  double operator()(std::size_t field, std::size_t feature) const { return radii_[field][feature]; }
  const std::vector<double>& field(std::size_t j) const { return radii_[j]; }
  std::size_t num_fields() const { return radii_.size(); }

 private:
  std::vector<std::vector<double>> radii_;
};

HelenRadii helen_radii(const FrequencyTable& freq, double rho, double xi, RadiusNorm norm = RadiusNorm::PerField);

inline constexpr double kNormGuard = 1e-12;

/// rho * g / ||g|| with the global norm; zero when ||g|| < 1e-12.
GradMap sam_perturb(const GradMap& grads, double rho);
/// rho * T^2 g / ||T g|| with T = |w| + 1e-12 element-wise.
GradMap asam_perturb(const ParamSpace& params, const GradMap& grads, double rho);
/// Dense block: rho * g_h / ||g_h|| (zero for HelenNetMode::None). Each
/// touched embedding row: rho^j_k * g^j_k / ||g^j_k||, skipped below 1e-12.
GradMap helen_perturb(const GradMap& grads, const HelenRadii& radii, double rho, HelenNetMode net_mode);

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<double> m;  // first moment, flat, congruent with params
  std::vector<double> v;  // second moment
  double mu_product = 1.0;
  std::optional<HelenRadii> radii;
};

/// Base optimizer optionally wrapped by SAM, ASAM or Helen. One optimizer
/// owns the update of one ParamSpace.
class Optimizer {
 public:
  /// Helen needs the training-split frequency table; radii are computed once here.
  Optimizer(OptimizerSpec spec, LayoutPtr layout, const FrequencyTable* freq = nullptr);

  const OptimizerSpec& spec() const { return spec_; }
  const OptimizerState& state() const { return state_; }

  /// One base update with `grads`; only touched embedding rows move unless dense_moments.
  void base_step(ParamSpace& params, const GradMap& grads);

  /// Perturbation the wrapper would apply for gradient `grads` at `params`.
  GradMap perturbation(const ParamSpace& params, const GradMap& grads) const;

  /// Full step: one gradient evaluation for bare optimizers, two for SAM,
  /// ASAM and Helen (the second at w + eps, after which w is restored
  /// exactly). Returns the loss at the unperturbed point.
  double step(ParamSpace& params, Objective& objective);

 private:
  template <typename F>
  void for_each_updated(const GradMap& grads, F&& f) const;

  OptimizerSpec spec_;
  LayoutPtr layout_;
  OptimizerState state_;
};

}  // namespace helen
