#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "helen/data.hpp"
#include "helen/graph.hpp"
#include "helen/objective.hpp"
#include "helen/param_space.hpp"

namespace helen {

enum class ModelFamily : std::uint8_t { Dnn, Pnn, DeepFm };

std::string to_string(ModelFamily family);
ModelFamily parse_model_family(const std::string& name);

struct ModelSpec {
  ModelFamily family = ModelFamily::Dnn;
  std::size_t embed_dim = 4;
  std::vector<std::size_t> hidden{16, 16};

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// A graph plus the node holding the [batch, 1] logits.
struct ModelGraph {
  CompGraph graph;
  NodeId logits;
};

/// CTR model over a categorical schema.
///
/// Embedding rows hold `embed_dim` coordinates; DeepFM rows carry one extra
/// trailing coordinate, the feature's first-order weight, so that each
/// feature's sparse parameters form a single block. The dense block stores
/// the MLP layers in order as W (in x out, row-major) followed by b (out).
///
///   DNN    logit = MLP(concat e^j)
///   PNN    logit = MLP(concat e^j ++ [e^a . e^b for a < b])
///   DeepFM logit = MLP(concat e^j) + sum_{a<b} e^a . e^b + sum_j w^j
class CtrModel {
 public:
  struct DenseLayer {
    std::size_t weight_offset;
    std::size_t bias_offset;
    std::size_t in;
    std::size_t out;
  };

  CtrModel(ModelSpec spec, std::vector<std::size_t> vocab);

  const ModelSpec& spec() const { return spec_; }
  const LayoutPtr& layout() const { return layout_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t mlp_input_dim() const { return layers_.front().in; }

  /// Embeddings ~ N(0, 0.01^2); weights ~ U(+-sqrt(6 / (fan_in + fan_out))); biases 0.
  ParamSpace init_params(std::uint64_t seed) const;

  /// BCE loss weighted by `sample_weight` per sample (default: batch mean).
  ModelGraph build_graph(Batch batch, std::optional<double> sample_weight = std::nullopt) const;

  /// (1 / denominator) * sum of per-sample losses over `rows`, evaluated in
  /// chunks of at most `chunk` rows. denominator defaults to rows.size().
  GraphObjective objective(const Dataset& data, const std::vector<std::size_t>& rows,
                           std::optional<double> denominator = std::nullopt, std::size_t chunk = 4096) const;
  GraphObjective objective(const Batch& batch) const;

  std::vector<double> logits(const ParamSpace& params, const Batch& batch) const;
  /// sigmoid(logit) clipped to [1e-7, 1 - 1e-7].
  std::vector<double> predict_proba(const ParamSpace& params, const Batch& batch) const;
  std::vector<double> predict_proba(const ParamSpace& params, const Dataset& data, std::size_t chunk = 8192) const;

 private:
  ModelSpec spec_;
  LayoutPtr layout_;
  std::vector<DenseLayer> layers_;
};

double clip_probability(double p);
double sigmoid(double x);

/// Binary checkpoint; see docs/checkpoint.md for the byte layout.
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ParamSpace& params);
void write_checkpoint(std::ostream& out, const ModelSpec& spec, const ParamSpace& params);

struct Checkpoint {
  ModelSpec spec;
  ParamSpace params;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace helen
