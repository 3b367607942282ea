#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "helen/graph.hpp"
#include "helen/param_space.hpp"

namespace helen {

/// A differentiable scalar loss over a ParamSpace. Counts gradient
/// evaluations so optimizers' cost contracts are observable.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual const LayoutPtr& layout() const = 0;
  virtual double loss(const ParamSpace& params) = 0;

  /// Gradient at `params`; writes the loss into `loss_out` when non-null.
  GradMap gradient(const ParamSpace& params, double* loss_out = nullptr) {
    ++gradient_evals_;
    return compute_gradient(params, loss_out);
  }

  /// Identifies the piecewise-smooth region containing `params` (for tape
  /// objectives, the ReLU on/off pattern). Constant for smooth objectives.
  virtual std::uint64_t regime(const ParamSpace&) { return 0; }

  /// Exact H v, for objectives that can provide it.
  virtual bool has_exact_hvp() const { return false; }
  virtual GradMap exact_hvp(const ParamSpace& params, const GradMap& v);

  std::size_t gradient_evals() const { return gradient_evals_; }
  void reset_counter() { gradient_evals_ = 0; }

 protected:
  virtual GradMap compute_gradient(const ParamSpace& params, double* loss_out) = 0;

 private:
  std::size_t gradient_evals_ = 0;
};

/// Sum of the scalar outputs of one or more graphs (e.g. a dataset split
/// into fixed-size chunks, each weighted so that the total is a mean).
class GraphObjective : public Objective {
 public:
  explicit GraphObjective(std::vector<CompGraph> graphs);

  const LayoutPtr& layout() const override { return layout_; }
  double loss(const ParamSpace& params) override;

  std::vector<CompGraph>& graphs() { return graphs_; }
  bool has_exact_hvp() const override { return true; }
  GradMap exact_hvp(const ParamSpace& params, const GradMap& v) override;
  std::uint64_t regime(const ParamSpace& params) override;

 protected:
  GradMap compute_gradient(const ParamSpace& params, double* loss_out) override;

 private:
  LayoutPtr layout_;
  std::vector<CompGraph> graphs_;
};

/// L(w) = 1/2 w^T A w + b^T w over the full flat layout. Test fixture and
/// reference objective with an exactly known Hessian.
class QuadraticObjective : public Objective {
 public:
  /// `a` is row-major total x total; `b` may be empty (zero).
  QuadraticObjective(LayoutPtr layout, std::vector<double> a, std::vector<double> b = {});

  const LayoutPtr& layout() const override { return layout_; }
  double loss(const ParamSpace& params) override;
  bool has_exact_hvp() const override { return true; }
  GradMap exact_hvp(const ParamSpace& params, const GradMap& v) override;

 protected:
  GradMap compute_gradient(const ParamSpace& params, double* loss_out) override;

 private:
  LayoutPtr layout_;
  std::vector<double> a_;
  std::vector<double> b_;
};

/// Adds `g` into `acc`, merging touched rows.
void accumulate(GradMap& acc, const GradMap& g);

struct GradCheckOptions {
  double step = 1e-5;  // relative to max(1, |w_i|)
  std::size_t random_coords = 64;
  std::uint64_t seed = 0;
  double denominator_floor = 1e-4;
  int kink_retries = 4;  // step shrinks 10x per retry while w +- h changes the regime
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  std::size_t kink_retries = 0;
};

/// Central-difference check of the analytic gradient on a random subset of
/// coordinates plus every coordinate of the embedding rows the evaluation
/// touched. Relative error is |a - n| / max(|a|, |n|, floor). A coordinate
/// whose probes land in a different ReLU regime is re-measured with a
/// smaller step.
GradCheckResult grad_check(Objective& objective, const ParamSpace& params, const GradCheckOptions& options = {});

/// H v by central differences of gradients with h = delta / ||v||. Costs two
/// gradient evaluations; v == 0 returns zero without evaluating. When w +- h v
/// leaves the ReLU regime of w, h shrinks tenfold (at most three times).
/// A difference across a kink measures the jump, not the curvature.
GradMap hvp(Objective& objective, const ParamSpace& params, const GradMap& v, double delta = 1e-4);

enum class HvpMethod { FiniteDifference, Exact };
std::string to_string(HvpMethod method);
HvpMethod parse_hvp_method(const std::string& name);

/// Dispatches to hvp() or Objective::exact_hvp().
GradMap hvp(Objective& objective, const ParamSpace& params, const GradMap& v, HvpMethod method, double delta = 1e-4);

}  // namespace helen
