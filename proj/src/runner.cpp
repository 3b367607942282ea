#include "helen/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "helen/error.hpp"
#include "helen/metrics.hpp"

namespace helen {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------- config

namespace {

class Reader {
 public:
  Reader(const json& doc, std::string path, std::vector<std::string>& errors)
      : doc_(doc), path_(std::move(path)), errors_(errors) {
    if (!doc_.is_object()) errors_.push_back(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.is_object() || !doc_.contains(key)) return;
    const json& v = doc_.at(key);
    try {
      read(v, out);
    } catch (const std::exception& e) {
      errors_.push_back(where(key) + ": " + e.what());
    }
  }

  template <typename E, typename Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!doc_.is_object() || !doc_.contains(key)) return;
    try {
      read(doc_.at(key), s);
      out = parse(s);
    } catch (const std::exception& e) {
      errors_.push_back(where(key) + ": " + e.what());
    }
  }

  /// Sub-object reader; missing sections fall back to defaults.
  std::optional<Reader> section(const char* key) {
    seen_.insert(key);
    if (!doc_.is_object() || !doc_.contains(key)) return std::nullopt;
    return Reader(doc_.at(key), where(key), errors_);
  }

  void finish() {
    if (!doc_.is_object()) return;
    for (const auto& [k, _] : doc_.items()) {
      if (!seen_.count(k)) errors_.push_back(where(k.c_str()) + ": unknown key");
    }
  }

  void check(bool ok, const char* key, const std::string& message) {
    if (!ok) errors_.push_back(where(key) + ": " + message);
  }

 private:
  std::string where(const char* key = nullptr) const {
    std::string w = path_.empty() ? std::string() : path_;
    if (key) w += (w.empty() ? "" : ".") + std::string(key);
    return w.empty() ? "config" : w;
  }

  static void read(const json& v, double& out) {
    if (!v.is_number()) throw ValueError("expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, bool& out) {
    if (!v.is_boolean()) throw ValueError("expected true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, int& out) {
    if (!v.is_number_integer()) throw ValueError("expected an integer");
    out = v.get<int>();
  }
  static void read(const json& v, std::uint64_t& out) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ValueError("expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  static void read(const json& v, std::string& out) {
    if (!v.is_string()) throw ValueError("expected a string");
    out = v.get<std::string>();
  }
  static void read(const json& v, std::vector<std::size_t>& out) {
    if (v.is_number()) {
      std::uint64_t x = 0;
      read(v, x);
      out = {static_cast<std::size_t>(x)};
      return;
    }
    if (!v.is_array()) throw ValueError("expected an integer or an array of integers");
    out.clear();
    for (const auto& e : v) {
      std::uint64_t x = 0;
      read(e, x);
      out.push_back(static_cast<std::size_t>(x));
    }
  }
  static void read(const json& v, std::array<double, 3>& out) {
    if (!v.is_array() || v.size() != 3) throw ValueError("expected an array of three numbers");
    for (std::size_t i = 0; i < 3; ++i) read(v[i], out[i]);
  }

  const json& doc_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void read_size(Reader& r, const char* key, std::size_t& out) {
  std::uint64_t v = out;
  r.get(key, v);
  out = static_cast<std::size_t>(v);
}

}  // namespace

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["config_version"] = c.config_version;
  const auto& d = c.dataset;
  j["dataset"] = {{"source", d.source},
                  {"name", d.name},
                  {"fields", d.zipf.fields},
                  {"vocab", d.zipf.vocab},
                  {"samples", d.zipf.samples},
                  {"zipf_exponent", d.zipf.zipf_exponent},
                  {"noise", d.zipf.noise},
                  {"seed", d.zipf.seed},
                  {"planted_dim", d.zipf.planted_dim},
                  {"signal_scale", d.zipf.signal_scale},
                  {"csv_path", d.csv_path},
                  {"label_column", d.csv.label_column},
                  {"min_count", d.csv.min_count},
                  {"split", d.split},
                  {"split_seed", d.split_seed}};
  j["model"] = {{"family", to_string(c.model.family)}, {"embed_dim", c.model.embed_dim}, {"hidden", c.model.hidden}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"base", to_string(o.base)},
                    {"wrapper", to_string(o.wrapper)},
                    {"lr", o.lr},
                    {"weight_decay", o.weight_decay},
                    {"rho", o.rho},
                    {"xi", o.xi},
                    {"helen_net_mode", to_string(o.helen_net_mode)},
                    {"radius_norm", to_string(o.radius_norm)},
                    {"beta1", o.beta1},
                    {"beta2", o.beta2},
                    {"eps", o.eps},
                    {"momentum_decay", o.momentum_decay},
                    {"dense_moments", o.dense_moments}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"seed", c.train.seed},
                {"eval_every", c.train.eval_every}};
  const auto& s = c.scan;
  j["scan"] = {{"field", s.field},         {"top_k", s.top_k},
               {"max_iters", s.max_iters}, {"tol", s.tol},
               {"hvp_delta", s.hvp_delta}, {"hvp_method", to_string(s.hvp_method)},
               {"eval_subsample", s.eval_subsample},
               {"threads", s.threads},     {"seed", s.seed}};
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  std::vector<std::string> errors;
  Reader root(doc, "", errors);
  root.get("config_version", c.config_version);
  root.check(c.config_version == kConfigVersion, "config_version",
             "unsupported version " + std::to_string(c.config_version) + " (expected " +
                 std::to_string(kConfigVersion) + ")");

  if (auto r = root.section("dataset")) {
    auto& d = c.dataset;
    r->get("source", d.source);
    r->get("name", d.name);
    read_size(*r, "fields", d.zipf.fields);
    r->get("vocab", d.zipf.vocab);
    read_size(*r, "samples", d.zipf.samples);
    r->get("zipf_exponent", d.zipf.zipf_exponent);
    r->get("noise", d.zipf.noise);
    r->get("seed", d.zipf.seed);
    read_size(*r, "planted_dim", d.zipf.planted_dim);
    r->get("signal_scale", d.zipf.signal_scale);
    r->get("csv_path", d.csv_path);
    r->get("label_column", d.csv.label_column);
    read_size(*r, "min_count", d.csv.min_count);
    r->get("split", d.split);
    r->get("split_seed", d.split_seed);
    r->check(d.source == "synthetic" || d.source == "csv", "source", "expected 'synthetic' or 'csv'");
    r->check(d.source != "csv" || !d.csv_path.empty(), "csv_path", "required when source is 'csv'");
    r->check(d.zipf.zipf_exponent > 0.0, "zipf_exponent", "must be > 0");
    r->check(d.zipf.noise >= 0.0 && d.zipf.noise <= 0.5, "noise", "must lie in [0, 0.5]");
    r->check(d.zipf.fields >= 1, "fields", "must be >= 1");
    r->check(d.source != "synthetic" || d.zipf.samples >= 1, "samples", "must be >= 1");
    r->check(d.zipf.planted_dim >= 1, "planted_dim", "must be >= 1");
    r->check(!d.zipf.vocab.empty() && std::all_of(d.zipf.vocab.begin(), d.zipf.vocab.end(),
                                                  [](std::size_t v) { return v >= 1; }),
             "vocab", "sizes must be >= 1");
    r->check(d.zipf.vocab.size() == 1 || d.zipf.vocab.size() == d.zipf.fields, "vocab",
             "must list one size or one size per field");
    r->check(std::all_of(d.split.begin(), d.split.end(), [](double f) { return f > 0.0; }) &&
                 std::abs(d.split[0] + d.split[1] + d.split[2] - 1.0) < 1e-9,
             "split", "fractions must be positive and sum to 1");
    r->finish();
  }
  if (auto r = root.section("model")) {
    r->get_enum("family", c.model.family, parse_model_family);
    read_size(*r, "embed_dim", c.model.embed_dim);
    r->get("hidden", c.model.hidden);
    r->check(c.model.embed_dim >= 1, "embed_dim", "must be >= 1");
    r->check(!c.model.hidden.empty() && std::all_of(c.model.hidden.begin(), c.model.hidden.end(),
                                                    [](std::size_t h) { return h >= 1; }),
             "hidden", "must list at least one layer of size >= 1");
    r->finish();
  }
  if (auto r = root.section("optimizer")) {
    auto& o = c.optimizer;
    r->get_enum("base", o.base, parse_base_optimizer);
    r->get_enum("wrapper", o.wrapper, parse_wrapper);
    r->get("lr", o.lr);
    r->get("weight_decay", o.weight_decay);
    r->get("rho", o.rho);
    r->get("xi", o.xi);
    r->get_enum("helen_net_mode", o.helen_net_mode, parse_helen_net_mode);
    r->get_enum("radius_norm", o.radius_norm, parse_radius_norm);
    r->get("beta1", o.beta1);
    r->get("beta2", o.beta2);
    r->get("eps", o.eps);
    r->get("momentum_decay", o.momentum_decay);
    r->get("dense_moments", o.dense_moments);
    r->check(o.lr > 0.0, "lr", "must be > 0");
    r->check(o.rho >= 0.0, "rho", "must be >= 0");
    r->check(o.xi >= 0.0 && o.xi <= 1.0, "xi", "must lie in [0, 1]");
    r->check(o.weight_decay >= 0.0, "weight_decay", "must be >= 0");
    r->check(o.beta1 >= 0.0 && o.beta1 < 1.0, "beta1", "must lie in [0, 1)");
    r->check(o.beta2 >= 0.0 && o.beta2 < 1.0, "beta2", "must lie in [0, 1)");
    r->check(o.eps > 0.0, "eps", "must be > 0");
    r->finish();
  }
  if (auto r = root.section("train")) {
    read_size(*r, "epochs", c.train.epochs);
    read_size(*r, "batch_size", c.train.batch_size);
    r->get("seed", c.train.seed);
    read_size(*r, "eval_every", c.train.eval_every);
    r->check(c.train.epochs >= 1, "epochs", "must be >= 1");
    r->check(c.train.batch_size >= 1, "batch_size", "must be >= 1");
    r->finish();
  }
  if (auto r = root.section("scan")) {
    auto& s = c.scan;
    read_size(*r, "field", s.field);
    read_size(*r, "top_k", s.top_k);
    read_size(*r, "max_iters", s.max_iters);
    r->get("tol", s.tol);
    r->get("hvp_delta", s.hvp_delta);
    r->get_enum("hvp_method", s.hvp_method, parse_hvp_method);
    read_size(*r, "eval_subsample", s.eval_subsample);
    read_size(*r, "threads", s.threads);
    r->get("seed", s.seed);
    r->check(s.top_k >= 1, "top_k", "must be >= 1");
    r->check(s.max_iters >= 1, "max_iters", "must be >= 1");
    r->check(s.tol > 0.0, "tol", "must be > 0");
    r->check(s.hvp_delta > 0.0, "hvp_delta", "must be > 0");
    r->finish();
  }
  root.get("output_dir", c.output_dir);
  root.finish();

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValueError(msg);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_to_json(config).dump(2) << '\n';
}

void apply_override(json& doc, const std::string& key, const std::string& value) {
  if (key.empty()) throw ValueError("empty override key");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValueError("malformed override key '" + key + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

// ---------------------------------------------------------------- data

Dataset load_dataset(const DatasetConfig& config) {
  if (config.source == "csv") return load_csv(config.csv_path, config.csv);
  if (config.source == "synthetic") return generate_zipf_dataset(config.zipf);
  throw ValueError("dataset.source must be 'synthetic' or 'csv'");
}

PreparedData prepare_data(const DatasetConfig& config) {
  const Dataset full = load_dataset(config);
  PreparedData out{split(full, config.split[0], config.split[1], config.split[2], config.split_seed), {}};
  out.train_freq = count_frequencies(out.splits.train);
  return out;
}

// ---------------------------------------------------------------- record

namespace {

ordered_json metrics_to_json(const EvalMetrics& m) {
  return {{"logloss", m.logloss}, {"auc", m.auc}, {"logloss_x100", 100.0 * m.logloss}, {"auc_x100", 100.0 * m.auc}};
}

EvalMetrics metrics_from_json(const json& j) { return {j.at("logloss").get<double>(), j.at("auc").get<double>()}; }

}  // namespace

ordered_json RunRecord::metrics_json() const {
  ordered_json j;
  j["record_version"] = 1;
  j["label"] = label;
  j["model"] = to_string(config.model.family);
  j["dataset"] = config.dataset.name;
  j["seed"] = config.train.seed;
  j["config"] = config_to_json(config);
  ordered_json epochs_j = ordered_json::array();
  for (const auto& e : epochs) {
    ordered_json ej{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.valid_logloss) ej["valid_logloss"] = *e.valid_logloss;
    if (e.valid_auc) ej["valid_auc"] = *e.valid_auc;
    epochs_j.push_back(std::move(ej));
  }
  j["epochs"] = std::move(epochs_j);
  j["valid"] = metrics_to_json(valid);
  j["test"] = metrics_to_json(test);
  j["steps"] = steps;
  j["gradient_evals"] = gradient_evals;
  j["scan_report"] = scan_report;
  return j;
}

ordered_json RunRecord::to_json() const {
  ordered_json j = metrics_json();
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  try {
    r.config = config_from_json(j.at("config"));
    r.label = j.at("label").get<std::string>();
    for (const auto& e : j.at("epochs")) {
      EpochRecord er;
      er.epoch = e.at("epoch").get<std::size_t>();
      er.train_loss = e.at("train_loss").get<double>();
      if (e.contains("valid_logloss")) er.valid_logloss = e.at("valid_logloss").get<double>();
      if (e.contains("valid_auc")) er.valid_auc = e.at("valid_auc").get<double>();
      r.epochs.push_back(er);
    }
    r.valid = metrics_from_json(j.at("valid"));
    r.test = metrics_from_json(j.at("test"));
    r.steps = j.at("steps").get<std::size_t>();
    r.gradient_evals = j.at("gradient_evals").get<std::size_t>();
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    r.scan_report = j.value("scan_report", std::string());
  } catch (const json::exception& e) {
    throw ValueError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------- train

EvalMetrics evaluate(const CtrModel& model, const ParamSpace& params, const Dataset& data) {
  const auto probs = model.predict_proba(params, data);
  const auto labels = data.labels();
  return {logloss(labels, probs), auc(labels, probs)};
}

TrainOutcome train(const RunConfig& config) { return train(config, prepare_data(config.dataset)); }

TrainOutcome train(const RunConfig& config, const PreparedData& data) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset& train_set = data.splits.train;
  const CtrModel model(config.model, train_set.schema.vocab_sizes());
  ParamSpace params = model.init_params(config.train.seed);
  Optimizer optimizer(config.optimizer, model.layout(), &data.train_freq);
  std::mt19937_64 rng(config.train.seed ^ 0x5851f42d4c957f2dULL);

  RunRecord record;
  record.config = config;
  record.label = config.optimizer.label();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = config.train.batch_size;
  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const std::size_t end = std::min(order.size(), begin + bs);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      GraphObjective objective = model.objective(train_set.batch(rows));
      loss_sum += optimizer.step(params, objective);
      record.gradient_evals += objective.gradient_evals();
      ++record.steps;
      ++batches;
    }
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = loss_sum / static_cast<double>(batches);
    if (config.train.eval_every > 0 && epoch % config.train.eval_every == 0) {
      const EvalMetrics v = evaluate(model, params, data.splits.valid);
      er.valid_logloss = v.logloss;
      er.valid_auc = v.auc;
    }
    record.epochs.push_back(er);
  }
  record.valid = evaluate(model, params, data.splits.valid);
  record.test = evaluate(model, params, data.splits.test);
  record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(record), std::move(params)};
}

TrainOutcome train_and_save(const RunConfig& config) {
  TrainOutcome out = train(config);
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", config.model, out.params);
  std::ofstream rec(dir / "record.json");
  if (!rec) throw IoError("cannot write " + (dir / "record.json").string());
  rec << out.record.to_json().dump(2) << '\n';
  return out;
}

// ---------------------------------------------------------------- scan

EigenScanReport scan(const RunConfig& config, const Checkpoint& checkpoint) {
  return scan(config, checkpoint, prepare_data(config.dataset));
}

EigenScanReport scan(const RunConfig& config, const Checkpoint& checkpoint, const PreparedData& data) {
  if (!(checkpoint.spec == config.model)) throw ValueError("checkpoint model spec does not match the config");
  const Dataset& eval = data.splits.train;
  const CtrModel model(config.model, eval.schema.vocab_sizes());
  if (!(checkpoint.params.layout() == *model.layout())) {
    throw ValueError("checkpoint layout does not match the dataset schema");
  }
  const auto& s = config.scan;
  if (s.field >= eval.schema.num_fields()) throw ValueError("scan.field out of range");
  const auto features = data.train_freq.top_k(s.field, s.top_k);
  ScanConfig sc;
  sc.power.max_iters = s.max_iters;
  sc.power.tol = s.tol;
  sc.power.hvp_delta = s.hvp_delta;
  sc.power.hvp_method = s.hvp_method;
  sc.power.seed = s.seed;
  sc.eval_subsample = s.eval_subsample;
  sc.threads = s.threads;
  return eigen_scan(model, checkpoint.params, eval, data.train_freq, s.field, features, sc);
}

void generate(const RunConfig& config, const std::filesystem::path& out) {
  if (config.dataset.source != "synthetic") throw ValueError("generate requires dataset.source = 'synthetic'");
  const Dataset ds = generate_zipf_dataset(config.dataset.zipf);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_csv(ds, out, config.dataset.csv.label_column);
}

// ---------------------------------------------------------------- compare

const RunRecord* CompareArm::find(const CompareCell& cell) const {
  auto it = std::lower_bound(runs.begin(), runs.end(), cell,
                             [](const auto& run, const CompareCell& c) { return run.first < c; });
  return it != runs.end() && it->first == cell ? &it->second : nullptr;
}

Comparison compare(const std::vector<RunRecord>& records) {
  if (records.size() < 2) throw ValueError("compare needs at least two run records");
  Comparison cmp;
  for (const auto& r : records) {
    const CompareCell cell{to_string(r.config.model.family), r.config.dataset.name, r.config.train.seed};
    CompareArm* target = nullptr;
    for (std::size_t copy = 1;; ++copy) {
      const std::string name = copy == 1 ? r.label : r.label + "#" + std::to_string(copy);
      auto it = std::find_if(cmp.arms.begin(), cmp.arms.end(), [&](const CompareArm& a) { return a.name == name; });
      if (it == cmp.arms.end()) {
        cmp.arms.push_back({name, {}});
        target = &cmp.arms.back();
        break;
      }
      if (!it->find(cell)) {
        target = &*it;
        break;
      }
    }
    target->runs.emplace_back(cell, r);
    std::sort(target->runs.begin(), target->runs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  if (cmp.arms.size() < 2) throw ValueError("compare needs at least two optimizer arms");

  std::set<CompareCell> all;
  for (const auto& a : cmp.arms) {
    for (const auto& run : a.runs) all.insert(run.first);
  }
  cmp.cells.assign(all.begin(), all.end());
  std::string missing;
  for (const auto& a : cmp.arms) {
    for (const auto& c : cmp.cells) {
      if (!a.find(c)) missing += "\n  " + a.name + ": model=" + c.model + " dataset=" + c.dataset + " seed=" +
                                 std::to_string(c.seed);
    }
  }
  if (!missing.empty()) throw ValueError("mismatched comparison grid, missing cells:" + missing);

  cmp.treatment = 0;
  for (std::size_t i = 0; i < cmp.arms.size(); ++i) {
    if (cmp.arms[i].name.rfind("helen", 0) == 0) {
      cmp.treatment = i;
      break;
    }
  }

  for (const auto& a : cmp.arms) {
    std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> groups;
    for (const auto& [cell, rec] : a.runs) groups[{cell.dataset, cell.seed}].push_back(100.0 * rec.test.auc);
    for (const auto& [key, values] : groups) {
      VarianceRow row{a.name, key.first, key.second, values.size(), 0.0};
      row.variance = values.size() >= 2 ? sample_variance(values) : 0.0;
      cmp.variances.push_back(row);
    }
  }

  const CompareArm& treat = cmp.arms[cmp.treatment];
  for (std::size_t i = 0; i < cmp.arms.size(); ++i) {
    if (i == cmp.treatment) continue;
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& c : cmp.cells) {
      a.push_back(100.0 * treat.find(c)->test.auc);
      b.push_back(100.0 * cmp.arms[i].find(c)->test.auc);
    }
    const TTestResult t = paired_t_test(a, b);
    cmp.tests.push_back({treat.name, cmp.arms[i].name, a.size(), t.t, t.p});
  }
  return cmp;
}

void Comparison::write(std::ostream& out) const {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  auto sci = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };
  out << "model,dataset,seed";
  for (const auto& a : arms) out << ',' << a.name << "_logloss_x100," << a.name << "_auc_x100";
  out << '\n';
  for (const auto& c : cells) {
    out << c.model << ',' << c.dataset << ',' << c.seed;
    for (const auto& a : arms) {
      const RunRecord* r = a.find(c);
      out << ',' << num(100.0 * r->test.logloss) << ',' << num(100.0 * r->test.auc);
    }
    out << '\n';
  }
  out << "# auc_variance,arm,dataset,seed,models,sample_variance\n";
  for (const auto& v : variances) {
    out << "# auc_variance," << v.arm << ',' << v.dataset << ',' << v.seed << ',' << v.models << ','
        << (v.models >= 2 ? sci(v.variance) : std::string("n/a")) << '\n';
  }
  out << "# paired_t_test,treatment,baseline,pairs,t,p\n";
  for (const auto& t : tests) {
    out << "# paired_t_test," << t.treatment << ',' << t.baseline << ',' << t.pairs << ',' << sci(t.t) << ','
        << sci(t.p) << '\n';
  }
}

std::vector<RunRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run record " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  std::vector<RunRecord> out;
  if (doc.is_array()) {
    for (const auto& r : doc) out.push_back(RunRecord::from_json(r));
  } else {
    out.push_back(RunRecord::from_json(doc));
  }
  return out;
}

}  // namespace helen
