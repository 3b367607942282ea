#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "helen/data.hpp"
#include "helen/hessian.hpp"
#include "helen/model.hpp"
#include "helen/optim.hpp"
#include "json.hpp"

namespace helen {

inline constexpr int kConfigVersion = 1;

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::string name = "zipf";         // grid key for compare
  ZipfConfig zipf;
  std::string csv_path;
  CsvOptions csv;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;

  bool operator==(const DatasetConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;  // parameter init and shuffling
  std::size_t eval_every = 1;

  bool operator==(const TrainConfig&) const = default;
};

struct ScanSettings {
  std::size_t field = 0;
  std::size_t top_k = 100;
  std::size_t max_iters = 200;
  double tol = 1e-6;
  double hvp_delta = 1e-4;
  HvpMethod hvp_method = HvpMethod::Exact;
  std::size_t eval_subsample = 0;
  std::size_t threads = 1;
  std::uint64_t seed = 1;

  bool operator==(const ScanSettings&) const = default;
};

struct RunConfig {
  int config_version = kConfigVersion;
  DatasetConfig dataset;
  ModelSpec model;
  OptimizerSpec optimizer;
  TrainConfig train;
  ScanSettings scan;
  std::string output_dir = "runs/default";

  bool operator==(const RunConfig&) const = default;
};

nlohmann::ordered_json config_to_json(const RunConfig& config);
/// Validates every key; collects all problems into one ValueError, one per line.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);
/// Sets dotted `key` (e.g. "optimizer.rho") in a config document; `value` is
/// parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value);

struct PreparedData {
  Splits splits;
  FrequencyTable train_freq;
};

Dataset load_dataset(const DatasetConfig& config);
PreparedData prepare_data(const DatasetConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_logloss;
  std::optional<double> valid_auc;
};

struct EvalMetrics {
  double logloss = 0.0;
  double auc = 0.0;
};

struct RunRecord {
  RunConfig config;
  std::string label;
  std::vector<EpochRecord> epochs;
  EvalMetrics valid;
  EvalMetrics test;
  std::size_t steps = 0;
  std::size_t gradient_evals = 0;
  double wall_clock_seconds = 0.0;
  std::string scan_report;

  /// Everything except wall-clock time.
  nlohmann::ordered_json metrics_json() const;
  nlohmann::ordered_json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

struct TrainOutcome {
  RunRecord record;
  ParamSpace params;
};

EvalMetrics evaluate(const CtrModel& model, const ParamSpace& params, const Dataset& data);

/// Trains from scratch; deterministic for a fixed config.
TrainOutcome train(const RunConfig& config);
TrainOutcome train(const RunConfig& config, const PreparedData& data);
/// train() and write record.json / checkpoint.bin under config.output_dir.
TrainOutcome train_and_save(const RunConfig& config);

/// Eigen-scan of the configured field's top-k training features at the
/// checkpointed parameters, evaluated over the training split.
EigenScanReport scan(const RunConfig& config, const Checkpoint& checkpoint);
EigenScanReport scan(const RunConfig& config, const Checkpoint& checkpoint, const PreparedData& data);

/// Synthetic dataset from the config, written in the ingestion dialect.
void generate(const RunConfig& config, const std::filesystem::path& out);

struct CompareCell {
  std::string model;
  std::string dataset;
  std::uint64_t seed = 0;

  auto operator<=>(const CompareCell&) const = default;
};

struct CompareArm {
  std::string name;
  std::vector<std::pair<CompareCell, RunRecord>> runs;  // sorted by cell
  const RunRecord* find(const CompareCell& cell) const;
};

struct VarianceRow {
  std::string arm;
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t models = 0;
  double variance = 0.0;  // sample variance of AUC x100 across models
};

struct TTestRow {
  std::string treatment;
  std::string baseline;
  std::size_t pairs = 0;
  double t = 0.0;
  double p = 1.0;
};

struct Comparison {
  std::vector<CompareArm> arms;
  std::vector<CompareCell> cells;
  std::vector<VarianceRow> variances;
  std::vector<TTestRow> tests;
  std::size_t treatment = 0;

  void write(std::ostream& out) const;
};

/// Groups records into arms by optimizer label (a repeated cell opens a new
/// arm "label#2"), checks every arm covers the same cells, and tests the
/// treatment arm (first Helen-family arm, else the first arm) against each
/// other arm on AUC.
Comparison compare(const std::vector<RunRecord>& records);

/// Records from a file holding one RunRecord object or an array of them.
std::vector<RunRecord> load_records(const std::filesystem::path& path);

}  // namespace helen
