#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "helen/batch.hpp"

namespace helen {

/// Per-field categorical vocabulary. Index 0 of every field is the
/// out-of-vocabulary slot.
class FieldSchema {
 public:
  static constexpr std::uint32_t kOov = 0;
  static inline const std::string kOovToken = "__oov__";

  FieldSchema() = default;
  FieldSchema(std::vector<std::string> field_names, std::vector<std::vector<std::string>> tokens);

  std::size_t num_fields() const { return names_.size(); }
  const std::vector<std::string>& field_names() const { return names_; }
  std::size_t vocab(std::size_t field) const { return tokens_[field].size(); }
  std::vector<std::size_t> vocab_sizes() const;

  /// Index of `token` in `field`, or kOov when unknown.
  std::uint32_t encode(std::size_t field, const std::string& token) const;
  const std::string& decode(std::size_t field, std::uint32_t index) const;

  bool operator==(const FieldSchema& other) const { return names_ == other.names_ && tokens_ == other.tokens_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> tokens_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> index_;
};

struct Sample {
  std::uint8_t label = 0;
  std::vector<std::uint32_t> features;  // one index per field

  bool operator==(const Sample&) const = default;
};

enum class Provenance : std::uint8_t { Synthetic, Csv };

struct Dataset {
  FieldSchema schema;
  std::vector<Sample> samples;
  Provenance provenance = Provenance::Synthetic;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
  /// Throws unless every sample has one valid index per field and a 0/1 label.
  void validate() const;
  /// Rows [begin, end) as a Batch, or the listed rows when `rows` is given.
  Batch batch(std::size_t begin, std::size_t end) const;
  Batch batch(const std::vector<std::size_t>& rows) const;
  std::vector<double> labels() const;
};

/// N^j_k: number of samples whose field-j feature is k.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(std::vector<std::vector<std::uint64_t>> counts);

  std::size_t num_fields() const { return counts_.size(); }
  std::uint64_t count(std::size_t field, std::size_t feature) const { return counts_[field][feature]; }
  const std::vector<std::uint64_t>& field_counts(std::size_t field) const { return counts_[field]; }
  std::uint64_t field_max(std::size_t field) const { return max_[field]; }
  std::uint64_t global_max() const;
  std::uint64_t total(std::size_t field) const;

  /// Features of `field` with N > 0 ordered by descending count (ties by index), at most `k`.
  std::vector<std::uint32_t> top_k(std::size_t field, std::size_t k) const;

  bool operator==(const FrequencyTable& other) const { return counts_ == other.counts_; }

 private:
  std::vector<std::vector<std::uint64_t>> counts_;
  std::vector<std::uint64_t> max_;
};

FrequencyTable count_frequencies(const Dataset& dataset);

struct ZipfConfig {
  std::size_t fields = 4;
  std::vector<std::size_t> vocab{200};  // one entry broadcasts to all fields
  std::size_t samples = 50000;
  double zipf_exponent = 1.2;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::size_t planted_dim = 4;
  double signal_scale = 5.0;

  bool operator==(const ZipfConfig&) const = default;
};

/// Skewed categorical data with labels from a planted logistic model.
/// Field j draws its Zipf rank r in [0, s_j) with P(r) proportional to
/// (r+1)^-exponent; the sampled feature index is r + 1 (index 0 is OOV), so
/// the schema vocabulary of field j is s_j + 1.
Dataset generate_zipf_dataset(const ZipfConfig& config);

/// Hidden ground truth behind generate_zipf_dataset: per-feature scalar
/// weights plus pairwise inner products of hidden per-feature vectors.
class PlantedModel {
 public:
  explicit PlantedModel(const ZipfConfig& config);
  double logit(const Sample& sample) const;
  double probability(const Sample& sample) const;

 private:
  std::size_t fields_;
  std::size_t dim_;
  double scale_;
  std::vector<std::vector<double>> bias_;     // [field][rank]
  std::vector<std::vector<double>> vectors_;  // [field][rank * dim]
};

struct CsvOptions {
  std::string label_column = "label";
  std::size_t min_count = 2;

  bool operator==(const CsvOptions&) const = default;
};

/// Every non-label column is a categorical field. Tokens occurring fewer
/// than `min_count` times map to OOV; kept tokens are indexed from 1 in
/// order of first appearance.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Dataset parse_csv(std::istream& in, const CsvOptions& options = {}, const std::string& source = "<stream>");

/// Writes `label,<field names...>` rows in the dialect load_csv reads.
void write_csv(const Dataset& dataset, std::ostream& out, const std::string& label_column = "label");
void save_csv(const Dataset& dataset, const std::filesystem::path& path, const std::string& label_column = "label");

struct Splits {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// Shuffled disjoint partition. Sizes round(f_train * n), round(f_valid * n), remainder.
Splits split(const Dataset& dataset, double train, double valid, double test, std::uint64_t seed);

}  // namespace helen
