#include "helen/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "helen/error.hpp"

namespace helen {

// ---------------------------------------------------------------- schema

FieldSchema::FieldSchema(std::vector<std::string> field_names, std::vector<std::vector<std::string>> tokens)
    : names_(std::move(field_names)), tokens_(std::move(tokens)) {
  if (names_.size() != tokens_.size()) throw ValueError("schema needs one token list per field");
  index_.resize(tokens_.size());
  for (std::size_t j = 0; j < tokens_.size(); ++j) {
    if (tokens_[j].empty()) throw ValueError("field " + names_[j] + " has an empty vocabulary");
    for (std::size_t k = 0; k < tokens_[j].size(); ++k) {
      if (!index_[j].emplace(tokens_[j][k], static_cast<std::uint32_t>(k)).second) {
        throw ValueError("duplicate token '" + tokens_[j][k] + "' in field " + names_[j]);
      }
    }
  }
}

std::vector<std::size_t> FieldSchema::vocab_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(tokens_.size());
  for (const auto& t : tokens_) out.push_back(t.size());
  return out;
}

std::uint32_t FieldSchema::encode(std::size_t field, const std::string& token) const {
  auto it = index_.at(field).find(token);
  return it == index_[field].end() ? kOov : it->second;
}

const std::string& FieldSchema::decode(std::size_t field, std::uint32_t index) const {
  return tokens_.at(field).at(index);
}

// ---------------------------------------------------------------- dataset

void Dataset::validate() const {
  const std::size_t m = schema.num_fields();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label > 1) throw ValueError("sample " + std::to_string(i) + " has a non-binary label");
    if (s.features.size() != m) throw ValueError("sample " + std::to_string(i) + " does not have one feature per field");
    for (std::size_t j = 0; j < m; ++j) {
      if (s.features[j] >= schema.vocab(j)) {
        throw ValueError("sample " + std::to_string(i) + " field " + std::to_string(j) + " index out of vocabulary");
      }
    }
  }
}

Batch Dataset::batch(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return batch(rows);
}

Batch Dataset::batch(const std::vector<std::size_t>& rows) const {
  Batch b;
  b.num_fields = schema.num_fields();
  b.features.reserve(rows.size() * b.num_fields);
  b.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    const Sample& s = samples.at(r);
    b.features.insert(b.features.end(), s.features.begin(), s.features.end());
    b.labels.push_back(static_cast<double>(s.label));
  }
  return b;
}

std::vector<double> Dataset::labels() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(static_cast<double>(s.label));
  return out;
}

// ---------------------------------------------------------------- frequencies

FrequencyTable::FrequencyTable(std::vector<std::vector<std::uint64_t>> counts) : counts_(std::move(counts)) {
  max_.reserve(counts_.size());
  for (const auto& c : counts_) max_.push_back(c.empty() ? 0 : *std::max_element(c.begin(), c.end()));
}

std::uint64_t FrequencyTable::global_max() const {
  return max_.empty() ? 0 : *std::max_element(max_.begin(), max_.end());
}

std::uint64_t FrequencyTable::total(std::size_t field) const {
  return std::accumulate(counts_[field].begin(), counts_[field].end(), std::uint64_t{0});
}

std::vector<std::uint32_t> FrequencyTable::top_k(std::size_t field, std::size_t k) const {
  const auto& c = counts_.at(field);
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < c.size(); ++i) {
    if (c[i] > 0) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return c[a] > c[b]; });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

FrequencyTable count_frequencies(const Dataset& dataset) {
  if (dataset.samples.empty()) throw ValueError("cannot count frequencies of an empty dataset");
  std::vector<std::vector<std::uint64_t>> counts;
  for (std::size_t j = 0; j < dataset.schema.num_fields(); ++j) counts.emplace_back(dataset.schema.vocab(j), 0);
  for (const auto& s : dataset.samples) {
    for (std::size_t j = 0; j < s.features.size(); ++j) ++counts[j].at(s.features[j]);
  }
  return FrequencyTable(std::move(counts));
}

// ---------------------------------------------------------------- synthetic

namespace {

std::vector<std::size_t> broadcast_vocab(const ZipfConfig& c) {
  if (c.fields == 0) throw ValueError("field count must be >= 1");
  if (c.vocab.size() == 1) return std::vector<std::size_t>(c.fields, c.vocab[0]);
  if (c.vocab.size() != c.fields) throw ValueError("vocab must list one size or one size per field");
  return c.vocab;
}

constexpr std::uint64_t kPlantedSalt = 0x9e3779b97f4a7c15ULL;

}  // namespace

PlantedModel::PlantedModel(const ZipfConfig& config)
    : fields_(config.fields), dim_(config.planted_dim), scale_(config.signal_scale) {
  const auto vocab = broadcast_vocab(config);
  std::mt19937_64 rng(config.seed ^ kPlantedSalt);
  std::normal_distribution<double> normal(0.0, 1.0);
  bias_.resize(fields_);
  vectors_.resize(fields_);
  for (std::size_t j = 0; j < fields_; ++j) {
    bias_[j].resize(vocab[j]);
    vectors_[j].resize(vocab[j] * dim_);
    for (double& b : bias_[j]) b = normal(rng);
    for (double& v : vectors_[j]) v = normal(rng);
  }
}

double PlantedModel::logit(const Sample& sample) const {
  double first = 0.0;
  for (std::size_t j = 0; j < fields_; ++j) first += bias_[j][sample.features[j] - 1];
  double second = 0.0;
  for (std::size_t a = 0; a < fields_; ++a) {
    const double* va = &vectors_[a][(sample.features[a] - 1) * dim_];
    for (std::size_t b = a + 1; b < fields_; ++b) {
      const double* vb = &vectors_[b][(sample.features[b] - 1) * dim_];
      for (std::size_t c = 0; c < dim_; ++c) second += va[c] * vb[c];
    }
  }
  const double pairs = static_cast<double>(std::max<std::size_t>(1, fields_ * (fields_ - 1) / 2));
  const double d = static_cast<double>(std::max<std::size_t>(1, dim_));
  return scale_ * (first / std::sqrt(static_cast<double>(fields_)) + second / std::sqrt(pairs * d));
}

double PlantedModel::probability(const Sample& sample) const { return 1.0 / (1.0 + std::exp(-logit(sample))); }

Dataset generate_zipf_dataset(const ZipfConfig& config) {
  if (!(config.zipf_exponent > 0.0)) throw ValueError("zipf_exponent must be > 0");
  if (!(config.noise >= 0.0 && config.noise <= 0.5)) throw ValueError("noise must lie in [0, 0.5]");
  if (config.samples == 0) throw ValueError("sample count must be >= 1");
  if (config.planted_dim == 0) throw ValueError("planted_dim must be >= 1");
  const auto vocab = broadcast_vocab(config);

  std::vector<std::vector<double>> cdf(config.fields);
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> tokens(config.fields);
  for (std::size_t j = 0; j < config.fields; ++j) {
    if (vocab[j] == 0) throw ValueError("vocab size must be >= 1");
    double acc = 0.0;
    for (std::size_t r = 0; r < vocab[j]; ++r) {
      acc += std::pow(static_cast<double>(r + 1), -config.zipf_exponent);
      cdf[j].push_back(acc);
    }
    for (double& c : cdf[j]) c /= acc;
    names.push_back("f" + std::to_string(j));
    tokens[j].push_back(FieldSchema::kOovToken);
    for (std::size_t r = 0; r < vocab[j]; ++r) tokens[j].push_back("t" + std::to_string(r + 1));
  }

  const PlantedModel planted(config);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Dataset ds;
  ds.schema = FieldSchema(std::move(names), std::move(tokens));
  ds.provenance = Provenance::Synthetic;
  ds.seed = config.seed;
  ds.samples.reserve(config.samples);
  for (std::size_t i = 0; i < config.samples; ++i) {
    Sample s;
    s.features.resize(config.fields);
    for (std::size_t j = 0; j < config.fields; ++j) {
      const double u = unif(rng);
      auto it = std::upper_bound(cdf[j].begin(), cdf[j].end(), u);
      const auto rank = std::min<std::size_t>(static_cast<std::size_t>(it - cdf[j].begin()), vocab[j] - 1);
      s.features[j] = static_cast<std::uint32_t>(rank + 1);
    }
    bool y = unif(rng) < planted.probability(s);
    if (unif(rng) < config.noise) y = !y;
    s.label = y ? 1 : 0;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------- csv

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvOptions& options, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(source + ": missing header row");
  const auto header = split_line(line);
  auto label_it = std::find(header.begin(), header.end(), options.label_column);
  if (label_it == header.end()) throw ValueError(source + ": label column '" + options.label_column + "' not found");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  std::vector<std::string> names;
  std::vector<std::size_t> field_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_col) continue;
    names.push_back(header[c]);
    field_cols.push_back(c);
  }
  if (names.empty()) throw ValueError(source + ": no categorical columns");

  std::vector<std::vector<std::string>> rows;
  std::vector<std::uint8_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ValueError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " columns, expected " + std::to_string(header.size()));
    }
    const std::string& lab = cells[label_col];
    if (lab != "0" && lab != "1") {
      throw ValueError(source + ": line " + std::to_string(line_no) + " column '" + options.label_column +
                       "' holds non-binary label '" + lab + "'");
    }
    labels.push_back(lab == "1" ? 1 : 0);
    std::vector<std::string> fields;
    fields.reserve(field_cols.size());
    for (std::size_t c : field_cols) fields.push_back(std::move(cells[c]));
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw ValueError(source + ": no data rows");

  const std::size_t m = names.size();
  std::vector<std::vector<std::string>> tokens(m, std::vector<std::string>{FieldSchema::kOovToken});
  for (std::size_t j = 0; j < m; ++j) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : rows) ++counts[r[j]];
    std::unordered_map<std::string, bool> seen;
    for (const auto& r : rows) {
      const std::string& t = r[j];
      if (counts[t] >= options.min_count && t != FieldSchema::kOovToken && seen.emplace(t, true).second) {
        tokens[j].push_back(t);
      }
    }
  }

  Dataset ds;
  ds.schema = FieldSchema(std::move(names), std::move(tokens));
  ds.provenance = Provenance::Csv;
  ds.samples.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Sample s;
    s.label = labels[i];
    s.features.reserve(m);
    for (std::size_t j = 0; j < m; ++j) s.features.push_back(ds.schema.encode(j, rows[i][j]));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv(in, options, path.string());
}

void write_csv(const Dataset& dataset, std::ostream& out, const std::string& label_column) {
  out << label_column;
  for (const auto& n : dataset.schema.field_names()) out << ',' << n;
  out << '\n';
  for (const auto& s : dataset.samples) {
    out << static_cast<int>(s.label);
    for (std::size_t j = 0; j < s.features.size(); ++j) out << ',' << dataset.schema.decode(j, s.features[j]);
    out << '\n';
  }
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path, const std::string& label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(dataset, out, label_column);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------- split

Splits split(const Dataset& dataset, double train, double valid, double test, std::uint64_t seed) {
  if (!(train > 0 && valid > 0 && test > 0)) throw ValueError("split fractions must be positive");
  if (std::abs(train + valid + test - 1.0) > 1e-9) throw ValueError("split fractions must sum to 1");
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(valid * static_cast<double>(n)));
  if (n_train == 0 || n_valid == 0 || n_train + n_valid >= n) {
    throw ValueError("split of " + std::to_string(n) + " samples leaves an empty partition");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Splits out{{dataset.schema, {}, dataset.provenance, dataset.seed},
             {dataset.schema, {}, dataset.provenance, dataset.seed},
             {dataset.schema, {}, dataset.provenance, dataset.seed}};
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& dst = i < n_train ? out.train : (i < n_train + n_valid ? out.valid : out.test);
    dst.samples.push_back(dataset.samples[order[i]]);
  }
  return out;
}

}  // namespace helen
