#include "helen/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "helen/error.hpp"

namespace helen {

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::Dnn: return "dnn";
    case ModelFamily::Pnn: return "pnn";
    case ModelFamily::DeepFm: return "deepfm";
  }
  return "unknown";
}

ModelFamily parse_model_family(const std::string& name) {
  if (name == "dnn") return ModelFamily::Dnn;
  if (name == "pnn") return ModelFamily::Pnn;
  if (name == "deepfm") return ModelFamily::DeepFm;
  throw ValueError("unknown model family '" + name + "' (expected dnn, pnn or deepfm)");
}

void ModelSpec::validate() const {
  if (embed_dim == 0) throw ValueError("model.embed_dim must be >= 1");
  if (hidden.empty()) throw ValueError("model.hidden must list at least one layer");
  for (std::size_t h : hidden) {
    if (h == 0) throw ValueError("model.hidden layer sizes must be >= 1");
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double clip_probability(double p) { return std::clamp(p, 1e-7, 1.0 - 1e-7); }

CtrModel::CtrModel(ModelSpec spec, std::vector<std::size_t> vocab) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t m = vocab.size();
  if (m == 0) throw ValueError("model needs at least one field");
  std::size_t in = m * spec_.embed_dim;
  if (spec_.family == ModelFamily::Pnn) in += m * (m - 1) / 2;

  std::size_t cursor = 0;
  std::vector<std::size_t> widths = spec_.hidden;
  widths.push_back(1);
  for (std::size_t out : widths) {
    layers_.push_back({cursor, cursor + in * out, in, out});
    cursor += in * out + out;
    in = out;
  }
  const std::size_t block = spec_.embed_dim + (spec_.family == ModelFamily::DeepFm ? 1 : 0);
  layout_ = std::make_shared<const Layout>(cursor, std::move(vocab), block);
}

ParamSpace CtrModel::init_params(std::uint64_t seed) const {
  ParamSpace p(layout_);
  std::mt19937_64 rng(seed);
  for (const auto& l : layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto dense = p.dense();
    for (std::size_t i = 0; i < l.in * l.out; ++i) dense[l.weight_offset + i] = u(rng);
  }
  std::normal_distribution<double> normal(0.0, 0.01);
  auto values = p.values();
  for (std::size_t i = layout_->dense_dim(); i < values.size(); ++i) values[i] = normal(rng);
  return p;
}

ModelGraph CtrModel::build_graph(Batch batch, std::optional<double> sample_weight) const {
  CompGraph g(layout_, std::move(batch));
  const std::size_t m = layout_->num_fields();
  const std::size_t d = spec_.embed_dim;

  std::vector<NodeId> embs;
  embs.reserve(m);
  for (std::size_t j = 0; j < m; ++j) embs.push_back(g.gather(j, 0, d));

  std::optional<NodeId> pairs;
  if (m >= 2 && spec_.family != ModelFamily::Dnn) pairs = g.pair_inner(embs);

  std::vector<NodeId> mlp_in = embs;
  if (spec_.family == ModelFamily::Pnn && pairs) mlp_in.push_back(*pairs);
  NodeId h = mlp_in.size() == 1 ? mlp_in.front() : g.concat(mlp_in);

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const NodeId w = g.dense(l.weight_offset, l.in, l.out);
    const NodeId b = g.dense(l.bias_offset, 1, l.out);
    h = g.affine(h, w, b);
    if (li + 1 < layers_.size()) h = g.relu(h);
  }

  NodeId logits = h;
  if (spec_.family == ModelFamily::DeepFm) {
    if (pairs) logits = g.add(logits, g.row_sum(*pairs));
    std::vector<NodeId> first;
    for (std::size_t j = 0; j < m; ++j) first.push_back(g.gather(j, d, 1));
    logits = g.add(logits, g.row_sum(first.size() == 1 ? first.front() : g.concat(first)));
  }
  g.bce_with_logits(logits, sample_weight);
  return {std::move(g), logits};
}

GraphObjective CtrModel::objective(const Dataset& data, const std::vector<std::size_t>& rows,
                                   std::optional<double> denominator, std::size_t chunk) const {
  if (rows.empty()) throw ValueError("objective over zero rows");
  if (chunk == 0) throw ValueError("chunk size must be >= 1");
  const double denom = denominator.value_or(static_cast<double>(rows.size()));
  std::vector<CompGraph> graphs;
  for (std::size_t begin = 0; begin < rows.size(); begin += chunk) {
    const std::size_t end = std::min(rows.size(), begin + chunk);
    std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                  rows.begin() + static_cast<std::ptrdiff_t>(end));
    graphs.push_back(build_graph(data.batch(part), 1.0 / denom).graph);
  }
  return GraphObjective(std::move(graphs));
}

GraphObjective CtrModel::objective(const Batch& batch) const {
  std::vector<CompGraph> graphs;
  graphs.push_back(build_graph(batch).graph);
  return GraphObjective(std::move(graphs));
}

std::vector<double> CtrModel::logits(const ParamSpace& params, const Batch& batch) const {
  auto mg = build_graph(batch);
  mg.graph.forward(params);
  const auto v = mg.graph.value(mg.logits).data();
  return {v.begin(), v.end()};
}

std::vector<double> CtrModel::predict_proba(const ParamSpace& params, const Batch& batch) const {
  auto z = logits(params, batch);
  for (double& v : z) v = clip_probability(sigmoid(v));
  return z;
}

std::vector<double> CtrModel::predict_proba(const ParamSpace& params, const Dataset& data, std::size_t chunk) const {
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const auto p = predict_proba(params, data.batch(begin, std::min(data.size(), begin + chunk)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

// ---------------------------------------------------------------- checkpoint

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'E', 'L', 'E', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelSpec& spec, const ParamSpace& params) {
  const Layout& l = params.layout();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.family));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.embed_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.hidden.size()));
  for (std::size_t h : spec.hidden) put<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(l.num_fields()));
  for (std::size_t s : l.vocab_sizes()) put<std::uint64_t>(out, s);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(l.block_dim()));
  put<std::uint64_t>(out, l.dense_dim());
  put<std::uint64_t>(out, l.total());
  const auto v = params.values();
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ParamSpace& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, spec, params);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  ModelSpec spec;
  const auto family = get<std::uint32_t>(in);
  if (family > static_cast<std::uint32_t>(ModelFamily::DeepFm)) throw IoError("bad model family in checkpoint");
  spec.family = static_cast<ModelFamily>(family);
  spec.embed_dim = get<std::uint32_t>(in);
  spec.hidden.resize(get<std::uint32_t>(in));
  for (auto& h : spec.hidden) h = get<std::uint32_t>(in);
  std::vector<std::size_t> vocab(get<std::uint32_t>(in));
  for (auto& s : vocab) s = get<std::uint64_t>(in);
  const auto block_dim = get<std::uint32_t>(in);
  const auto dense_dim = get<std::uint64_t>(in);
  const auto total = get<std::uint64_t>(in);

  CtrModel model(spec, vocab);
  const Layout& l = *model.layout();
  if (l.block_dim() != block_dim || l.dense_dim() != dense_dim || l.total() != total) {
    throw IoError("checkpoint layout inconsistent with its model spec");
  }
  std::vector<double> values(total);
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(total * sizeof(double)))) {
    throw IoError("truncated checkpoint");
  }
  return {spec, ParamSpace(model.layout(), std::move(values))};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace helen
