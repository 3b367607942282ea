#include "helen/param_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helen/error.hpp"

namespace helen {

Layout::Layout(std::size_t dense_dim, std::vector<std::size_t> vocab, std::size_t block_dim)
    : dense_dim_(dense_dim), vocab_(std::move(vocab)), block_dim_(block_dim) {
  if (block_dim_ == 0 && !vocab_.empty()) throw ValueError("embedding block dimension must be >= 1");
  field_offset_.reserve(vocab_.size());
  std::size_t cursor = dense_dim_;
  for (std::size_t s : vocab_) {
    if (s == 0) throw ValueError("vocabulary size must be >= 1");
    field_offset_.push_back(cursor);
    cursor += s * block_dim_;
  }
  total_ = cursor;
}

std::size_t Layout::offset(BlockId id) const {
  if (id.kind == BlockId::Kind::Dense) return 0;
  if (id.field >= vocab_.size() || id.feature >= vocab_[id.field]) {
    throw ValueError("block id out of range: field " + std::to_string(id.field) + " feature " +
                     std::to_string(id.feature));
  }
  return field_offset_[id.field] + static_cast<std::size_t>(id.feature) * block_dim_;
}

std::size_t Layout::block_size(BlockId id) const {
  return id.kind == BlockId::Kind::Dense ? dense_dim_ : block_dim_;
}

bool Layout::operator==(const Layout& other) const {
  return dense_dim_ == other.dense_dim_ && vocab_ == other.vocab_ && block_dim_ == other.block_dim_;
}

BlockVector::BlockVector(LayoutPtr layout) : layout_(std::move(layout)), values_(layout_->total(), 0.0) {}

BlockVector::BlockVector(LayoutPtr layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->total()) throw ValueError("flat vector length does not match layout");
}

bool BlockVector::congruent(const BlockVector& other) const {
  return layout_ && other.layout_ && (layout_ == other.layout_ || *layout_ == *other.layout_);
}

std::span<double> BlockVector::block(BlockId id) {
  return std::span<double>(values_).subspan(layout_->offset(id), layout_->block_size(id));
}

std::span<const double> BlockVector::block(BlockId id) const {
  return std::span<const double>(values_).subspan(layout_->offset(id), layout_->block_size(id));
}

void BlockVector::assign(std::span<const double> flat) {
  if (flat.size() != values_.size()) throw ValueError("flat vector length does not match layout");
  std::copy(flat.begin(), flat.end(), values_.begin());
}

void BlockVector::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

double BlockVector::dot(const BlockVector& other) const {
  if (!congruent(other)) throw ValueError("dot of incongruent block vectors");
  return std::inner_product(values_.begin(), values_.end(), other.values_.begin(), 0.0);
}

double BlockVector::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

void BlockVector::axpy(double alpha, const BlockVector& other) {
  if (!congruent(other)) throw ValueError("axpy of incongruent block vectors");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += alpha * other.values_[i];
}

GradMap::GradMap(LayoutPtr layout) : BlockVector(std::move(layout)), touched_(this->layout().num_fields()) {}

GradMap::GradMap(LayoutPtr layout, std::vector<double> values)
    : BlockVector(std::move(layout), std::move(values)), touched_(this->layout().num_fields()) {}

void GradMap::set_touched(std::vector<std::vector<std::uint32_t>> touched) {
  if (touched.size() != layout().num_fields()) throw ValueError("touched list must have one entry per field");
  for (auto& rows : touched) {
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  }
  touched_ = std::move(touched);
}

void GradMap::touch_all() {
  for (std::size_t j = 0; j < layout().num_fields(); ++j) {
    touched_[j].resize(layout().vocab(j));
    std::iota(touched_[j].begin(), touched_[j].end(), 0u);
  }
}

}  // namespace helen
