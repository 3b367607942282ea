#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "helen/batch.hpp"
#include "helen/param_space.hpp"
#include "helen/tensor.hpp"

namespace helen {

using NodeId = std::size_t;

/// Reverse-mode differentiation tape over batched rank-2 tensors.
///
/// Nodes are appended in topological order by construction; every op only
/// references earlier nodes. Leaves either read a slice of the dense block
/// or gather embedding rows for the bound batch. The graph is built once per
/// batch shape and may be evaluated repeatedly against different parameter
/// values (forward, then backward).
class CompGraph {
 public:
  enum class Op : std::uint8_t {
    Constant,
    DenseLeaf,
    Gather,
    Concat,
    Affine,
    Relu,
    Sigmoid,
    Mul,
    Add,
    PairInner,
    RowSum,
    Sum,
    Mean,
    BceWithLogits,
  };

  CompGraph(LayoutPtr layout, Batch batch);

  const Layout& layout() const { return *layout_; }
  const Batch& batch() const { return batch_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  Op op(NodeId id) const { return nodes_.at(id).op; }

  NodeId constant(Tensor value);
  /// rows x cols matrix read from the dense block starting at `offset`.
  NodeId dense(std::size_t offset, std::size_t rows, std::size_t cols);
  /// [batch, count] slice of field `field`'s embedding rows, columns [col_begin, col_begin+count).
  NodeId gather(std::size_t field, std::size_t col_begin, std::size_t count);
  NodeId concat(const std::vector<NodeId>& parts);
  /// x W + b, bias optional.
  NodeId affine(NodeId x, NodeId weight, std::optional<NodeId> bias);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId mul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  /// Inner products of every pair (a<b) of [batch, d] inputs -> [batch, n(n-1)/2].
  NodeId pair_inner(const std::vector<NodeId>& parts);
  NodeId row_sum(NodeId x);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  /// sample_weight * sum_i BCE(logit_i, y_i); weight defaults to 1/batch (mean).
  NodeId bce_with_logits(NodeId logits, std::optional<double> sample_weight = std::nullopt);

  /// Marks the scalar output; defaults to the last node added.
  void set_output(NodeId id);
  NodeId output() const;

  double forward(const ParamSpace& params);
  GradMap backward();
  /// Exact H v of the output at `params` (tangent forward pass, then the
  /// tangent of the backward pass). ReLU counts as piecewise linear, so its
  /// kinks contribute nothing.
  GradMap hessian_vector(const ParamSpace& params, const GradMap& v);

  /// Hash of the sign pattern of every ReLU input at the last forward.
  std::uint64_t relu_signature() const;

  const Tensor& value(NodeId id) const;
  bool evaluated() const { return evaluated_; }

  static std::string op_name(Op op);

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    std::vector<std::size_t> shape;  // {rows, cols}; {} for scalars
    // DenseLeaf: offset; Gather: field, col_begin
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 1.0;
    Tensor value;
    Tensor grad;
    Tensor tangent;
    Tensor dgrad;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  void eval_node(Node& n, const ParamSpace& params);
  void backprop_node(const Node& n, GradMap& out);
  void tangent_node(Node& n, const GradMap& v);
  void tangent_backprop_node(const Node& n, GradMap& out);
  std::vector<std::vector<std::uint32_t>> gathered_rows() const;
  std::string describe(NodeId id) const;

  LayoutPtr layout_;
  Batch batch_;
  std::vector<Node> nodes_;
  std::optional<NodeId> output_;
  bool evaluated_ = false;
};

}  // namespace helen
