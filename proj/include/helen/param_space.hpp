#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace helen {

/// Address of one parameter block: the dense block h, or the embedding row
/// of feature `feature` in field `field`.
struct BlockId {
  enum class Kind : std::uint8_t { Dense, Embed };

  Kind kind = Kind::Dense;
  std::uint32_t field = 0;
  std::uint32_t feature = 0;

  static BlockId dense() { return {}; }
  static BlockId embed(std::uint32_t j, std::uint32_t k) { return {Kind::Embed, j, k}; }

  bool operator==(const BlockId&) const = default;
};

/// Flat layout w = [h, e^0_0 ... e^0_{s_0-1}, e^1_0, ...]. Each embedding row
/// holds `block_dim` coordinates.
class Layout {
 public:
  Layout(std::size_t dense_dim, std::vector<std::size_t> vocab, std::size_t block_dim);

  std::size_t dense_dim() const { return dense_dim_; }
  std::size_t num_fields() const { return vocab_.size(); }
  std::size_t vocab(std::size_t field) const { return vocab_[field]; }
  const std::vector<std::size_t>& vocab_sizes() const { return vocab_; }
  std::size_t block_dim() const { return block_dim_; }
  std::size_t total() const { return total_; }

  /// First flat index of field `field`'s embedding table.
  std::size_t field_offset(std::size_t field) const { return field_offset_[field]; }
  std::size_t offset(BlockId id) const;
  std::size_t block_size(BlockId id) const;

  bool operator==(const Layout& other) const;

 private:
  std::size_t dense_dim_;
  std::vector<std::size_t> vocab_;
  std::size_t block_dim_;
  std::vector<std::size_t> field_offset_;
  std::size_t total_;
};

using LayoutPtr = std::shared_ptr<const Layout>;

/// A flat vector addressed block-wise through a shared Layout.
class BlockVector {
 public:
  BlockVector() = default;
  explicit BlockVector(LayoutPtr layout);
  BlockVector(LayoutPtr layout, std::vector<double> values);

  const Layout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  bool congruent(const BlockVector& other) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> block(BlockId id);
  std::span<const double> block(BlockId id) const;
  std::span<double> dense() { return block(BlockId::dense()); }
  std::span<const double> dense() const { return block(BlockId::dense()); }
  std::span<double> embed(std::size_t j, std::size_t k) {
    return block(BlockId::embed(static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k)));
  }
  std::span<const double> embed(std::size_t j, std::size_t k) const {
    return block(BlockId::embed(static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k)));
  }

  /// Flat copy, i.e. the vector w.
  std::vector<double> flatten() const { return values_; }
  void assign(std::span<const double> flat);
  void set_zero();

  double dot(const BlockVector& other) const;
  double norm() const;
  /// this += alpha * other
  void axpy(double alpha, const BlockVector& other);

 private:
  LayoutPtr layout_;
  std::vector<double> values_;
};

/// Model parameters.
class ParamSpace : public BlockVector {
 public:
  using BlockVector::BlockVector;
};

/// Gradient (or any direction) congruent with a ParamSpace. Tracks the
/// embedding rows written by the producing evaluation; all other embedding
/// rows are exactly zero.
class GradMap : public BlockVector {
 public:
  explicit GradMap(LayoutPtr layout);
  GradMap(LayoutPtr layout, std::vector<double> values);

  /// Sorted, unique feature indices touched per field.
  const std::vector<std::vector<std::uint32_t>>& touched() const { return touched_; }
  void set_touched(std::vector<std::vector<std::uint32_t>> touched);
  /// Marks every row of every field as touched.
  void touch_all();

 private:
  std::vector<std::vector<std::uint32_t>> touched_;
};

}  // namespace helen
