// ctr-helen: generate / train / scan / compare

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "helen/error.hpp"
#include "helen/runner.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_doc(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw helen::IoError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw helen::IoError(path + ": " + e.what());
  }
}

// Config file, then --set overrides, then dedicated flags.
helen::RunConfig resolve(const std::string& path, const std::vector<std::string>& sets,
                         const std::vector<std::pair<std::string, std::string>>& flags) {
  json doc = read_doc(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw helen::UsageError("--set expects key=value, got '" + kv + "'");
    helen::apply_override(doc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : flags) helen::apply_override(doc, k, v);
  return helen::config_from_json(doc);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw helen::IoError("cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-wise sharpness-aware training for toy CTR models"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("generate", "write the synthetic dataset as CSV");
  std::string gen_out;
  gen->add_option("--config", config_path, "config file")->required();
  gen->add_option("--out", gen_out, "output CSV (default <output_dir>/data.csv)");
  gen->add_option("--set", sets, "override a config key, e.g. dataset.samples=5000");

  auto* tr = app.add_subcommand("train", "train one model and write record.json + checkpoint.bin");
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  tr->add_option("--config", config_path, "config file")->required();
  tr->add_option("--seed", seed, "train.seed");
  tr->add_option("--output-dir", out_dir, "output_dir");
  tr->add_option("--set", sets, "override a config key, e.g. optimizer.rho=0.1");

  auto* sc = app.add_subcommand("scan", "per-feature Hessian eigen-scan of a checkpoint");
  std::string ckpt_path;
  std::optional<std::size_t> field;
  std::optional<std::size_t> top_k;
  std::optional<std::size_t> threads;
  std::string scan_out;
  sc->add_option("--config", config_path, "config file")->required();
  sc->add_option("--checkpoint", ckpt_path, "checkpoint.bin")->required();
  sc->add_option("--field", field, "scan.field");
  sc->add_option("--top-k", top_k, "scan.top_k");
  sc->add_option("--threads", threads, "scan.threads");
  sc->add_option("--out", scan_out, "report CSV (default <output_dir>/scan_field<J>.csv)");
  sc->add_option("--set", sets, "override a config key");

  auto* cmp = app.add_subcommand("compare", "comparison table and paired t-test over run records");
  std::vector<std::string> records;
  std::string cmp_out;
  cmp->add_option("records", records, "record.json files")->required();
  cmp->add_option("--out", cmp_out, "write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto config = resolve(config_path, sets, {});
      const fs::path out = gen_out.empty() ? fs::path(config.output_dir) / "data.csv" : fs::path(gen_out);
      helen::generate(config, out);
      std::cout << "wrote " << out.string() << '\n';
    } else if (*tr) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (seed) flags.emplace_back("train.seed", std::to_string(*seed));
      if (out_dir) flags.emplace_back("output_dir", json(*out_dir).dump());
      const auto config = resolve(config_path, sets, flags);
      const auto outcome = helen::train_and_save(config);
      const auto& r = outcome.record;
      std::printf("%s  valid logloss %.6f auc %.6f  test logloss %.6f auc %.6f  (%zu steps, %.1fs)\n",
                  r.label.c_str(), r.valid.logloss, r.valid.auc, r.test.logloss, r.test.auc, r.steps,
                  r.wall_clock_seconds);
      std::cout << "wrote " << (fs::path(config.output_dir) / "record.json").string() << '\n';
    } else if (*sc) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (field) flags.emplace_back("scan.field", std::to_string(*field));
      if (top_k) flags.emplace_back("scan.top_k", std::to_string(*top_k));
      if (threads) flags.emplace_back("scan.threads", std::to_string(*threads));
      const auto config = resolve(config_path, sets, flags);
      const auto report = helen::scan(config, helen::load_checkpoint(ckpt_path));
      const fs::path out = scan_out.empty()
                               ? fs::path(config.output_dir) / ("scan_field" + std::to_string(config.scan.field) + ".csv")
                               : fs::path(scan_out);
      std::ostringstream text;
      report.write_csv(text);
      write_text(out, text.str());
      const auto& s = report.summary;
      if (s.available) {
        std::printf("rows %zu  r(lambda,N) %.4f  r(|g|,N) %.4f  mean %.4g  std %.4g\n", s.rows_used, s.r_lambda_count,
                    s.r_grad_count, s.mean_lambda, s.std_lambda);
      } else {
        std::printf("rows %zu  summary unavailable\n", s.rows_used);
      }
      std::cout << "wrote " << out.string() << '\n';
    } else if (*cmp) {
      std::vector<helen::RunRecord> all;
      for (const auto& path : records) {
        auto part = helen::load_records(path);
        all.insert(all.end(), part.begin(), part.end());
      }
      const auto table = helen::compare(all);
      std::ostringstream text;
      table.write(text);
      if (cmp_out.empty()) {
        std::cout << text.str();
      } else {
        write_text(cmp_out, text.str());
      }
    }
  } catch (const helen::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
