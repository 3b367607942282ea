#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "helen/data.hpp"
#include "helen/model.hpp"
#include "helen/objective.hpp"

namespace helen {

/// The coordinates of embedding row e^j_k (block_dim of them; for DeepFM
/// this includes the first-order weight).
struct BlockSelector {
  std::uint32_t field = 0;
  std::uint32_t feature = 0;

  BlockId id() const { return BlockId::embed(field, feature); }
};

/// H^j_k v: embeds v into the full space, applies the finite-difference
/// HVP of `objective`, and restricts the result to the block.
std::vector<double> block_hvp(Objective& objective, const ParamSpace& params, BlockSelector sel,
                              std::span<const double> v, double delta = 1e-4,
                              HvpMethod method = HvpMethod::FiniteDifference);

struct PowerIterationOptions {
  std::size_t max_iters = 200;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  double hvp_delta = 1e-4;
  HvpMethod hvp_method = HvpMethod::FiniteDifference;
};

struct EigenEstimate {
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Power iteration on the block Hessian. Converges onto the eigenvalue of
/// largest magnitude and reports its signed Rayleigh quotient, so away from
/// a minimum a dominant negative eigenvalue is returned as such.
EigenEstimate top_eigenvalue(Objective& objective, const ParamSpace& params, BlockSelector sel,
                             const PowerIterationOptions& options = {});

/// Pearson correlation; throws when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct ScanRow {
  std::uint32_t field = 0;
  std::uint32_t feature = 0;
  std::uint64_t count = 0;
  double grad_norm = 0.0;
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct ScanSummary {
  bool available = false;
  std::size_t rows_used = 0;
  double r_lambda_count = 0.0;
  double r_grad_count = 0.0;
  double mean_lambda = 0.0;
  double std_lambda = 0.0;  // sample standard deviation
};

struct EigenScanReport {
  std::vector<ScanRow> rows;
  ScanSummary summary;

  /// Summary over converged rows with count > 0.
  static ScanSummary summarize(const std::vector<ScanRow>& rows);

  /// `field,feature,count,grad_norm,lambda,iters,converged` then `#` summary lines.
  void write_csv(std::ostream& out) const;
};

struct ScanConfig {
  PowerIterationOptions power;
  std::size_t eval_subsample = 0;  // 0 = whole evaluation set
  std::size_t threads = 1;
  std::size_t chunk = 4096;
};

/// For each listed feature of `field`: count from `freq`, gradient norm on
/// the evaluation set, and top block eigenvalue of the evaluation-set mean
/// loss. Only samples containing the feature contribute to its block, so
/// each row evaluates on that subset (scaled by 1/|eval|). Rows come back
/// in the order of `features` regardless of `threads`.
EigenScanReport eigen_scan(const CtrModel& model, const ParamSpace& params, const Dataset& eval,
                           const FrequencyTable& freq, std::size_t field, const std::vector<std::uint32_t>& features,
                           const ScanConfig& config = {});

}  // namespace helen
