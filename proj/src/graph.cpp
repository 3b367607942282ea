#include "helen/graph.hpp"

#include <algorithm>
#include <cmath>

#include "helen/error.hpp"

namespace helen {
namespace {

std::size_t rows_of(const std::vector<std::size_t>& s) { return s.empty() ? 1 : s[0]; }
std::size_t cols_of(const std::vector<std::size_t>& s) { return s.size() < 2 ? 1 : s[1]; }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

CompGraph::CompGraph(LayoutPtr layout, Batch batch) : layout_(std::move(layout)), batch_(std::move(batch)) {
  if (batch_.size() == 0) throw ValueError("empty batch");
  if (batch_.num_fields != layout_->num_fields()) throw ValueError("batch field count does not match layout");
  if (batch_.features.size() != batch_.size() * batch_.num_fields) throw ValueError("malformed batch");
  for (std::size_t i = 0; i < batch_.size(); ++i) {
    for (std::size_t j = 0; j < batch_.num_fields; ++j) {
      if (batch_.feature(i, j) >= layout_->vocab(j)) {
        throw ValueError("feature index " + std::to_string(batch_.feature(i, j)) + " out of range for field " +
                         std::to_string(j) + " at row " + std::to_string(i));
      }
    }
  }
}

std::string CompGraph::op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::DenseLeaf: return "dense";
    case Op::Gather: return "gather";
    case Op::Concat: return "concat";
    case Op::Affine: return "affine";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Mul: return "mul";
    case Op::Add: return "add";
    case Op::PairInner: return "pair_inner";
    case Op::RowSum: return "row_sum";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::BceWithLogits: return "bce_with_logits";
  }
  return "unknown";
}

std::string CompGraph::describe(NodeId id) const { return op_name(nodes_[id].op) + "#" + std::to_string(id); }

const CompGraph::Node& CompGraph::node(NodeId id) const {
  if (id >= nodes_.size()) throw ValueError("node id out of range");
  return nodes_[id];
}

NodeId CompGraph::push(Node n) {
  for (NodeId in : n.inputs) {
    if (in >= nodes_.size()) throw ValueError("graph input refers to a later node");
  }
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return nodes_.size() - 1;
}

NodeId CompGraph::constant(Tensor value) {
  Node n{Op::Constant, {}, {value.rows(), value.cols()}};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId CompGraph::dense(std::size_t offset, std::size_t rows, std::size_t cols) {
  if (offset + rows * cols > layout_->dense_dim()) throw ValueError("dense leaf exceeds dense block");
  Node n{Op::DenseLeaf, {}, {rows, cols}};
  n.a = offset;
  return push(std::move(n));
}

NodeId CompGraph::gather(std::size_t field, std::size_t col_begin, std::size_t count) {
  if (field >= layout_->num_fields()) throw ValueError("gather field out of range");
  if (count == 0 || col_begin + count > layout_->block_dim()) throw ValueError("gather columns exceed block");
  Node n{Op::Gather, {}, {batch_.size(), count}};
  n.a = field;
  n.b = col_begin;
  return push(std::move(n));
}

NodeId CompGraph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ValueError("concat of nothing");
  std::size_t rows = rows_of(node(parts[0]).shape);
  std::size_t cols = 0;
  for (NodeId p : parts) {
    if (rows_of(node(p).shape) != rows) throw ValueError("concat row mismatch");
    cols += cols_of(node(p).shape);
  }
  return push({Op::Concat, parts, {rows, cols}});
}

NodeId CompGraph::affine(NodeId x, NodeId weight, std::optional<NodeId> bias) {
  const auto& xs = node(x).shape;
  const auto& ws = node(weight).shape;
  if (cols_of(xs) != rows_of(ws)) throw ValueError("affine inner dimension mismatch");
  std::vector<NodeId> in{x, weight};
  if (bias) {
    const auto& bs = node(*bias).shape;
    if (rows_of(bs) * cols_of(bs) != cols_of(ws)) throw ValueError("affine bias size mismatch");
    in.push_back(*bias);
  }
  return push({Op::Affine, in, {rows_of(xs), cols_of(ws)}});
}

NodeId CompGraph::relu(NodeId x) { return push({Op::Relu, {x}, node(x).shape}); }
NodeId CompGraph::sigmoid(NodeId x) { return push({Op::Sigmoid, {x}, node(x).shape}); }

NodeId CompGraph::mul(NodeId a, NodeId b) {
  if (node(a).shape != node(b).shape) throw ValueError("mul shape mismatch");
  return push({Op::Mul, {a, b}, node(a).shape});
}

NodeId CompGraph::add(NodeId a, NodeId b) {
  if (node(a).shape != node(b).shape) throw ValueError("add shape mismatch");
  return push({Op::Add, {a, b}, node(a).shape});
}

NodeId CompGraph::pair_inner(const std::vector<NodeId>& parts) {
  if (parts.size() < 2) throw ValueError("pair_inner needs at least two inputs");
  const auto& s0 = node(parts[0]).shape;
  for (NodeId p : parts) {
    if (node(p).shape != s0) throw ValueError("pair_inner shape mismatch");
  }
  const std::size_t pairs = parts.size() * (parts.size() - 1) / 2;
  return push({Op::PairInner, parts, {rows_of(s0), pairs}});
}

NodeId CompGraph::row_sum(NodeId x) { return push({Op::RowSum, {x}, {rows_of(node(x).shape), 1}}); }
NodeId CompGraph::sum(NodeId x) { return push({Op::Sum, {x}, {}}); }
NodeId CompGraph::mean(NodeId x) { return push({Op::Mean, {x}, {}}); }

NodeId CompGraph::bce_with_logits(NodeId logits, std::optional<double> sample_weight) {
  const auto& s = node(logits).shape;
  if (rows_of(s) != batch_.size() || cols_of(s) != 1) throw ValueError("bce expects [batch, 1] logits");
  Node n{Op::BceWithLogits, {logits}, {}};
  n.weight = sample_weight.value_or(1.0 / static_cast<double>(batch_.size()));
  return push(std::move(n));
}

void CompGraph::set_output(NodeId id) {
  const auto& s = node(id).shape;
  if (rows_of(s) * cols_of(s) != 1) throw ValueError("graph output must be scalar");
  output_ = id;
}

NodeId CompGraph::output() const {
  if (output_) return *output_;
  if (nodes_.empty()) throw UsageError("graph has no nodes");
  const auto& s = nodes_.back().shape;
  if (rows_of(s) * cols_of(s) != 1) throw UsageError("graph output is not scalar");
  return nodes_.size() - 1;
}

const Tensor& CompGraph::value(NodeId id) const {
  if (!evaluated_) throw UsageError("value requested before forward");
  return node(id).value;
}

void CompGraph::eval_node(Node& n, const ParamSpace& params) {
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  switch (n.op) {
    case Op::Constant:
      return;
    case Op::DenseLeaf: {
      n.value = Tensor(n.shape);
      auto src = params.dense().subspan(n.a, n.value.size());
      std::copy(src.begin(), src.end(), n.value.data().begin());
      return;
    }
    case Op::Gather: {
      n.value = Tensor(n.shape);
      const std::size_t cols = n.shape[1];
      for (std::size_t i = 0; i < batch_.size(); ++i) {
        auto row = params.embed(n.a, batch_.feature(i, n.a));
        std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(n.b), cols, &n.value(i, 0));
      }
      return;
    }
    case Op::Concat: {
      n.value = Tensor(n.shape);
      std::size_t c0 = 0;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        const Tensor& t = in(p);
        for (std::size_t i = 0; i < t.rows(); ++i) {
          for (std::size_t c = 0; c < t.cols(); ++c) n.value(i, c0 + c) = t(i, c);
        }
        c0 += t.cols();
      }
      return;
    }
    case Op::Affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      n.value = Tensor(n.shape);
      const std::size_t out = w.cols();
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double* y = &n.value(i, 0);
        if (n.inputs.size() == 3) {
          const Tensor& b = in(2);
          for (std::size_t o = 0; o < out; ++o) y[o] = b[o];
        }
        for (std::size_t k = 0; k < x.cols(); ++k) {
          const double xk = x(i, k);
          const double* wr = &w(k, 0);
          for (std::size_t o = 0; o < out; ++o) y[o] += xk * wr[o];
        }
      }
      return;
    }
    case Op::Relu: {
      n.value = in(0);
      for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
      return;
    }
    case Op::Sigmoid: {
      n.value = in(0);
      for (double& v : n.value.data()) v = sigmoid_scalar(v);
      return;
    }
    case Op::Mul:
    case Op::Add: {
      n.value = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = n.op == Op::Mul ? n.value[i] * b[i] : n.value[i] + b[i];
      }
      return;
    }
    case Op::PairInner: {
      n.value = Tensor(n.shape);
      const std::size_t m = n.inputs.size();
      const std::size_t d = in(0).cols();
      for (std::size_t i = 0; i < n.shape[0]; ++i) {
        std::size_t col = 0;
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t b = a + 1; b < m; ++b, ++col) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += in(a)(i, c) * in(b)(i, c);
            n.value(i, col) = s;
          }
        }
      }
      return;
    }
    case Op::RowSum: {
      const Tensor& x = in(0);
      n.value = Tensor(n.shape);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x(i, c);
        n.value[i] = s;
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& x = in(0);
      double s = 0.0;
      for (double v : x.data()) s += v;
      if (n.op == Op::Mean) s /= static_cast<double>(x.size());
      n.value = Tensor::scalar(s);
      return;
    }
    case Op::BceWithLogits: {
      const Tensor& z = in(0);
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double zi = z[i];
        // max(z,0) - z*y + log(1 + exp(-|z|))
        s += std::max(zi, 0.0) - zi * batch_.labels[i] + std::log1p(std::exp(-std::abs(zi)));
      }
      n.value = Tensor::scalar(n.weight * s);
      return;
    }
  }
}

double CompGraph::forward(const ParamSpace& params) {
  if (!(params.layout() == *layout_)) throw ValueError("parameters do not match the graph layout");
  const NodeId out = output();
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    eval_node(nodes_[id], params);
    if (!nodes_[id].value.all_finite()) throw NumericError("non-finite value produced by node " + describe(id));
  }
  evaluated_ = true;
  return nodes_[out].value[0];
}

void CompGraph::backprop_node(const Node& n, GradMap& out) {
  const Tensor& g = n.grad;
  auto in_val = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  auto in_grad = [&](std::size_t i) -> Tensor& { return nodes_[n.inputs[i]].grad; };
  switch (n.op) {
    case Op::Constant:
      return;
    case Op::DenseLeaf: {
      auto dst = out.dense().subspan(n.a, g.size());
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      return;
    }
    case Op::Gather: {
      const std::size_t cols = n.shape[1];
      for (std::size_t i = 0; i < batch_.size(); ++i) {
        auto row = out.embed(n.a, batch_.feature(i, n.a));
        for (std::size_t c = 0; c < cols; ++c) row[n.b + c] += g(i, c);
      }
      return;
    }
    case Op::Concat: {
      std::size_t c0 = 0;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        Tensor& t = in_grad(p);
        for (std::size_t i = 0; i < t.rows(); ++i) {
          for (std::size_t c = 0; c < t.cols(); ++c) t(i, c) += g(i, c0 + c);
        }
        c0 += t.cols();
      }
      return;
    }
    case Op::Affine: {
      const Tensor& x = in_val(0);
      const Tensor& w = in_val(1);
      Tensor& gx = in_grad(0);
      Tensor& gw = in_grad(1);
      const std::size_t out_dim = w.cols();
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* gy = &g(i, 0);
        for (std::size_t k = 0; k < x.cols(); ++k) {
          const double* wr = &w(k, 0);
          double* gwr = &gw(k, 0);
          const double xk = x(i, k);
          double acc = 0.0;
          for (std::size_t o = 0; o < out_dim; ++o) {
            acc += gy[o] * wr[o];
            gwr[o] += xk * gy[o];
          }
          gx(i, k) += acc;
        }
      }
      if (n.inputs.size() == 3) {
        Tensor& gb = in_grad(2);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g(i, o);
        }
      }
      return;
    }
    case Op::Relu: {
      const Tensor& x = in_val(0);
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      return;
    }
    case Op::Sigmoid: {
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = n.value[i];
        gx[i] += g[i] * s * (1.0 - s);
      }
      return;
    }
    case Op::Mul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      Tensor& ga = in_grad(0);
      Tensor& gb = in_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      return;
    }
    case Op::Add: {
      Tensor& ga = in_grad(0);
      Tensor& gb = in_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      return;
    }
    case Op::PairInner: {
      const std::size_t m = n.inputs.size();
      const std::size_t d = in_val(0).cols();
      for (std::size_t i = 0; i < n.shape[0]; ++i) {
        std::size_t col = 0;
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t b = a + 1; b < m; ++b, ++col) {
            const double gc = g(i, col);
            for (std::size_t c = 0; c < d; ++c) {
              in_grad(a)(i, c) += gc * in_val(b)(i, c);
              in_grad(b)(i, c) += gc * in_val(a)(i, c);
            }
          }
        }
      }
      return;
    }
    case Op::RowSum: {
      Tensor& gx = in_grad(0);
      for (std::size_t i = 0; i < gx.rows(); ++i) {
        for (std::size_t c = 0; c < gx.cols(); ++c) gx(i, c) += g[i];
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      Tensor& gx = in_grad(0);
      const double scale = n.op == Op::Mean ? g[0] / static_cast<double>(gx.size()) : g[0];
      for (double& v : gx.data()) v += scale;
      return;
    }
    case Op::BceWithLogits: {
      const Tensor& z = in_val(0);
      Tensor& gz = in_grad(0);
      for (std::size_t i = 0; i < z.size(); ++i) {
        gz[i] += g[0] * n.weight * (sigmoid_scalar(z[i]) - batch_.labels[i]);
      }
      return;
    }
  }
}

GradMap CompGraph::backward() {
  if (!evaluated_) throw UsageError("backward called before forward");
  const NodeId out = output();
  for (auto& n : nodes_) n.grad = Tensor(n.shape);
  nodes_[out].grad[0] = 1.0;

  GradMap result(layout_);
  for (NodeId id = out + 1; id-- > 0;) backprop_node(nodes_[id], result);

  result.set_touched(gathered_rows());
  return result;
}

std::uint64_t CompGraph::relu_signature() const {
  if (!evaluated_) throw UsageError("relu_signature requested before forward");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& n : nodes_) {
    if (n.op != Op::Relu) continue;
    for (double x : nodes_[n.inputs[0]].value.data()) h = (h ^ (x > 0.0 ? 0x9eULL : 0x37ULL)) * 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::vector<std::uint32_t>> CompGraph::gathered_rows() const {
  std::vector<std::vector<std::uint32_t>> touched(layout_->num_fields());
  for (const auto& n : nodes_) {
    if (n.op != Op::Gather) continue;
    for (std::size_t i = 0; i < batch_.size(); ++i) touched[n.a].push_back(batch_.feature(i, n.a));
  }
  return touched;
}

// ---------------------------------------------------------------- second order

void CompGraph::tangent_node(Node& n, const GradMap& v) {
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  auto tin = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].tangent; };
  n.tangent = Tensor(n.shape);
  Tensor& t = n.tangent;
  switch (n.op) {
    case Op::Constant:
      return;
    case Op::DenseLeaf: {
      auto src = v.dense().subspan(n.a, t.size());
      std::copy(src.begin(), src.end(), t.data().begin());
      return;
    }
    case Op::Gather: {
      const std::size_t cols = n.shape[1];
      for (std::size_t i = 0; i < batch_.size(); ++i) {
        auto row = v.embed(n.a, batch_.feature(i, n.a));
        std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(n.b), cols, &t(i, 0));
      }
      return;
    }
    case Op::Concat: {
      std::size_t c0 = 0;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        const Tensor& tp = tin(p);
        for (std::size_t i = 0; i < tp.rows(); ++i) {
          for (std::size_t c = 0; c < tp.cols(); ++c) t(i, c0 + c) = tp(i, c);
        }
        c0 += tp.cols();
      }
      return;
    }
    case Op::Affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& dx = tin(0);
      const Tensor& dw = tin(1);
      const std::size_t out = w.cols();
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double* y = &t(i, 0);
        if (n.inputs.size() == 3) {
          const Tensor& db = tin(2);
          for (std::size_t o = 0; o < out; ++o) y[o] = db[o];
        }
        for (std::size_t k = 0; k < x.cols(); ++k) {
          const double xk = x(i, k);
          const double dxk = dx(i, k);
          const double* wr = &w(k, 0);
          const double* dwr = &dw(k, 0);
          for (std::size_t o = 0; o < out; ++o) y[o] += dxk * wr[o] + xk * dwr[o];
        }
      }
      return;
    }
    case Op::Relu: {
      const Tensor& x = in(0);
      const Tensor& dx = tin(0);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = x[i] > 0.0 ? dx[i] : 0.0;
      return;
    }
    case Op::Sigmoid: {
      const Tensor& dx = tin(0);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = n.value[i] * (1.0 - n.value[i]) * dx[i];
      return;
    }
    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = tin(0)[i] * b[i] + a[i] * tin(1)[i];
      return;
    }
    case Op::Add: {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = tin(0)[i] + tin(1)[i];
      return;
    }
    case Op::PairInner: {
      const std::size_t m = n.inputs.size();
      const std::size_t d = in(0).cols();
      for (std::size_t i = 0; i < n.shape[0]; ++i) {
        std::size_t col = 0;
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t b = a + 1; b < m; ++b, ++col) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += tin(a)(i, c) * in(b)(i, c) + in(a)(i, c) * tin(b)(i, c);
            t(i, col) = s;
          }
        }
      }
      return;
    }
    case Op::RowSum: {
      const Tensor& dx = tin(0);
      for (std::size_t i = 0; i < dx.rows(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < dx.cols(); ++c) s += dx(i, c);
        t[i] = s;
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& dx = tin(0);
      double s = 0.0;
      for (double x : dx.data()) s += x;
      if (n.op == Op::Mean) s /= static_cast<double>(dx.size());
      t[0] = s;
      return;
    }
    case Op::BceWithLogits: {
      const Tensor& z = in(0);
      const Tensor& dz = tin(0);
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) s += (sigmoid_scalar(z[i]) - batch_.labels[i]) * dz[i];
      t[0] = n.weight * s;
      return;
    }
  }
}

// Adjoint tangents: dgrad of each input from (grad, dgrad) of the node and
// (value, tangent) of the inputs.
void CompGraph::tangent_backprop_node(const Node& n, GradMap& out) {
  const Tensor& g = n.grad;
  const Tensor& dg = n.dgrad;
  auto val = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  auto tan = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].tangent; };
  auto dgin = [&](std::size_t i) -> Tensor& { return nodes_[n.inputs[i]].dgrad; };
  switch (n.op) {
    case Op::Constant:
      return;
    case Op::DenseLeaf: {
      auto dst = out.dense().subspan(n.a, dg.size());
      for (std::size_t i = 0; i < dg.size(); ++i) dst[i] += dg[i];
      return;
    }
    case Op::Gather: {
      const std::size_t cols = n.shape[1];
      for (std::size_t i = 0; i < batch_.size(); ++i) {
        auto row = out.embed(n.a, batch_.feature(i, n.a));
        for (std::size_t c = 0; c < cols; ++c) row[n.b + c] += dg(i, c);
      }
      return;
    }
    case Op::Concat: {
      std::size_t c0 = 0;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        Tensor& t = dgin(p);
        for (std::size_t i = 0; i < t.rows(); ++i) {
          for (std::size_t c = 0; c < t.cols(); ++c) t(i, c) += dg(i, c0 + c);
        }
        c0 += t.cols();
      }
      return;
    }
    case Op::Affine: {
      const Tensor& x = val(0);
      const Tensor& w = val(1);
      const Tensor& dx = tan(0);
      const Tensor& dw = tan(1);
      Tensor& dgx = dgin(0);
      Tensor& dgw = dgin(1);
      const std::size_t out_dim = w.cols();
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* gy = &g(i, 0);
        const double* dgy = &dg(i, 0);
        for (std::size_t k = 0; k < x.cols(); ++k) {
          const double* wr = &w(k, 0);
          const double* dwr = &dw(k, 0);
          double* dgwr = &dgw(k, 0);
          const double xk = x(i, k);
          const double dxk = dx(i, k);
          double acc = 0.0;
          for (std::size_t o = 0; o < out_dim; ++o) {
            acc += dgy[o] * wr[o] + gy[o] * dwr[o];
            dgwr[o] += dxk * gy[o] + xk * dgy[o];
          }
          dgx(i, k) += acc;
        }
      }
      if (n.inputs.size() == 3) {
        Tensor& dgb = dgin(2);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          for (std::size_t o = 0; o < out_dim; ++o) dgb[o] += dg(i, o);
        }
      }
      return;
    }
    case Op::Relu: {
      const Tensor& x = val(0);
      Tensor& dgx = dgin(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) dgx[i] += dg[i];
      }
      return;
    }
    case Op::Sigmoid: {
      const Tensor& dx = tan(0);
      Tensor& dgx = dgin(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = n.value[i];
        const double ds = s * (1.0 - s);
        dgx[i] += dg[i] * ds + g[i] * (1.0 - 2.0 * s) * ds * dx[i];
      }
      return;
    }
    case Op::Mul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      Tensor& dga = dgin(0);
      Tensor& dgb = dgin(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        dga[i] += dg[i] * b[i] + g[i] * tan(1)[i];
        dgb[i] += dg[i] * a[i] + g[i] * tan(0)[i];
      }
      return;
    }
    case Op::Add: {
      Tensor& dga = dgin(0);
      Tensor& dgb = dgin(1);
      for (std::size_t i = 0; i < dg.size(); ++i) {
        dga[i] += dg[i];
        dgb[i] += dg[i];
      }
      return;
    }
    case Op::PairInner: {
      const std::size_t m = n.inputs.size();
      const std::size_t d = val(0).cols();
      for (std::size_t i = 0; i < n.shape[0]; ++i) {
        std::size_t col = 0;
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t b = a + 1; b < m; ++b, ++col) {
            const double gc = g(i, col);
            const double dgc = dg(i, col);
            for (std::size_t c = 0; c < d; ++c) {
              dgin(a)(i, c) += dgc * val(b)(i, c) + gc * tan(b)(i, c);
              dgin(b)(i, c) += dgc * val(a)(i, c) + gc * tan(a)(i, c);
            }
          }
        }
      }
      return;
    }
    case Op::RowSum: {
      Tensor& dgx = dgin(0);
      for (std::size_t i = 0; i < dgx.rows(); ++i) {
        for (std::size_t c = 0; c < dgx.cols(); ++c) dgx(i, c) += dg[i];
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      Tensor& dgx = dgin(0);
      const double scale = n.op == Op::Mean ? dg[0] / static_cast<double>(dgx.size()) : dg[0];
      for (double& x : dgx.data()) x += scale;
      return;
    }
    case Op::BceWithLogits: {
      const Tensor& z = val(0);
      const Tensor& dz = tan(0);
      Tensor& dgz = dgin(0);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = sigmoid_scalar(z[i]);
        dgz[i] += n.weight * (dg[0] * (s - batch_.labels[i]) + g[0] * s * (1.0 - s) * dz[i]);
      }
      return;
    }
  }
}

GradMap CompGraph::hessian_vector(const ParamSpace& params, const GradMap& v) {
  if (!params.congruent(v)) throw ValueError("direction does not match the graph layout");
  forward(params);
  const NodeId out = output();
  for (NodeId id = 0; id <= out; ++id) tangent_node(nodes_[id], v);
  for (auto& n : nodes_) {
    n.grad = Tensor(n.shape);
    n.dgrad = Tensor(n.shape);
  }
  nodes_[out].grad[0] = 1.0;

  GradMap unused(layout_);
  GradMap result(layout_);
  for (NodeId id = out + 1; id-- > 0;) {
    backprop_node(nodes_[id], unused);
    tangent_backprop_node(nodes_[id], result);
  }
  result.set_touched(gathered_rows());
  return result;
}

}  // namespace helen
