#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace helen {

/// Fixed-shape mini-batch: one feature index per field per sample.
struct Batch {
  std::size_t num_fields = 0;
  std::vector<std::uint32_t> features;  // row-major, size() * num_fields
  std::vector<double> labels;

  std::size_t size() const { return labels.size(); }
  std::uint32_t feature(std::size_t row, std::size_t field) const {
    return features[row * num_fields + field];
  }
};

}  // namespace helen
