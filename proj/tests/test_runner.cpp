#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helen/error.hpp"
#include "helen/runner.hpp"
#include "oracles.hpp"

using namespace helen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.dataset.zipf.samples = 4000;
  c.dataset.zipf.vocab = {50};
  c.dataset.zipf.seed = 3;
  c.train.epochs = 2;
  c.train.batch_size = 128;
  c.model.hidden = {16};
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ctr_helen_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(const json& doc) {
  try {
    config_from_json(doc);
  } catch (const ValueError& e) {
    return e.what();
  }
  return "";
}

RunRecord fake_record(const std::string& model, std::uint64_t seed, double auc, Wrapper w = Wrapper::None) {
  RunRecord r;
  r.config.model.family = parse_model_family(model);
  r.config.train.seed = seed;
  r.config.optimizer.wrapper = w;
  r.config.optimizer.xi = 0.5;
  r.label = r.config.optimizer.label();
  r.test = {0.45, auc};
  r.valid = {0.45, auc};
  return r;
}

int run_cli(const std::string& args, const fs::path& log) {
  const char* bin = std::getenv("CTR_HELEN_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "CTR_HELEN_BIN is not set");
  const std::string cmd = std::string(bin) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config survives a JSON round trip") {
  RunConfig c;
  CHECK(config_from_json(config_to_json(c)) == c);
  c = small_config();
  c.optimizer.wrapper = Wrapper::Helen;
  c.optimizer.rho = 0.0375;
  c.optimizer.xi = 1.0 / 3.0;
  c.optimizer.base = BaseOptimizer::Radam;
  c.optimizer.radius_norm = RadiusNorm::Global;
  c.model.family = ModelFamily::Pnn;
  c.dataset.zipf.vocab = {10, 20, 30, 40};
  c.dataset.split = {0.7, 0.2, 0.1};
  c.scan.hvp_method = HvpMethod::FiniteDifference;
  c.output_dir = "runs/x y";
  CHECK(config_from_json(json::parse(config_to_json(c).dump())) == c);
}

TEST_CASE("a partial config falls back to defaults") {
  const auto c = config_from_json(json::parse(R"({"optimizer": {"wrapper": "sam"}, "train": {"epochs": 3}})"));
  CHECK(c.optimizer.wrapper == Wrapper::Sam);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.batch_size == 256);
  CHECK(c.model == ModelSpec{});
}

TEST_CASE("config errors are named field by field") {
  const auto msg = error_of(json::parse(R"({
    "config_version": 2,
    "dataset": {"noise": 0.7, "split": [0.5, 0.5, 0.5], "colour": "red"},
    "model": {"family": "dcn", "embed_dim": 0},
    "optimizer": {"lr": -1, "xi": 2},
    "train": {"epochs": 0, "batch_size": "big"},
    "scan": {"tol": 0}
  })"));
  for (const char* key : {"config_version", "dataset.noise", "dataset.split", "dataset.colour: unknown key",
                          "model.family", "model.embed_dim", "optimizer.lr", "optimizer.xi", "train.epochs",
                          "train.batch_size", "scan.tol"}) {
    INFO(key);
    CHECK(msg.find(key) != std::string::npos);
  }
  CHECK(error_of(json::parse(R"({"dataset": {"source": "csv"}})")).find("dataset.csv_path") != std::string::npos);
  CHECK(error_of(json::parse(R"({"dataset": {"samples": 0}})")).find("dataset.samples") != std::string::npos);
  CHECK(error_of(json::parse(R"({"dataset": {"fields": 3, "vocab": [5, 5]}})")).find("dataset.vocab") !=
        std::string::npos);
}

TEST_CASE("overrides address dotted keys") {
  json doc = json::object();
  apply_override(doc, "optimizer.rho", "0.1");
  apply_override(doc, "optimizer.wrapper", "helen");
  apply_override(doc, "model.hidden", "[8, 4]");
  apply_override(doc, "output_dir", "out/dir");
  const auto c = config_from_json(doc);
  CHECK(c.optimizer.rho == 0.1);
  CHECK(c.optimizer.wrapper == Wrapper::Helen);
  CHECK(c.model.hidden == std::vector<std::size_t>{8, 4});
  CHECK(c.output_dir == "out/dir");
  CHECK_THROWS_AS(apply_override(doc, "a..b", "1"), ValueError);
}

TEST_CASE("training is deterministic") {
  const auto c = small_config();
  const auto a = train(c);
  const auto b = train(c);
  CHECK(a.record.metrics_json() == b.record.metrics_json());
  CHECK(a.params.flatten() == b.params.flatten());
  auto c2 = c;
  c2.train.seed = 2;
  CHECK_FALSE(train(c2).params.flatten() == a.params.flatten());
}

TEST_CASE("gradient evaluations per step") {
  auto c = small_config();
  const auto bare = train(c).record;
  // 3200 training rows in batches of 128, two epochs
  CHECK(bare.steps == 50);
  CHECK(bare.gradient_evals == 50);
  CHECK(bare.epochs.size() == 2);
  CHECK(bare.epochs[1].valid_auc.has_value());
  for (auto w : {Wrapper::Sam, Wrapper::Asam, Wrapper::Helen}) {
    c.optimizer.wrapper = w;
    const auto r = train(c).record;
    CHECK(r.gradient_evals == 2 * r.steps);
  }
}

TEST_CASE("Helen with rho 0 reproduces Adam") {
  auto c = small_config();
  const auto adam = train(c).record;
  c.optimizer.wrapper = Wrapper::Helen;
  c.optimizer.rho = 0.0;
  c.optimizer.xi = 0.5;
  const auto helen = train(c).record;
  CHECK(helen.metrics_json()["epochs"] == adam.metrics_json()["epochs"]);
  CHECK(helen.valid.auc == adam.valid.auc);
  CHECK(helen.test.auc == adam.test.auc);
  CHECK(helen.test.logloss == adam.test.logloss);
}

TEST_CASE("labels without signal give chance AUC") {
  auto c = small_config();
  c.dataset.zipf.samples = 50000;
  c.dataset.zipf.noise = 0.5;
  c.dataset.split = {0.5, 0.1, 0.4};
  const auto r = train(c).record;
  CHECK(r.test.auc >= 0.48);
  CHECK(r.test.auc <= 0.52);
}

TEST_CASE("DNN learns the planted model") {
  RunConfig c;  // 50k samples, 5 epochs, noise 0.1
  c.model.family = ModelFamily::Dnn;
  const auto r = train(c).record;
  CHECK(r.test.auc > 0.75);
}

TEST_CASE("record JSON round trip") {
  const auto out = train(small_config());
  const RunRecord back = RunRecord::from_json(json::parse(out.record.to_json().dump()));
  CHECK(back.metrics_json() == out.record.metrics_json());
  CHECK(back.wall_clock_seconds == out.record.wall_clock_seconds);
  CHECK_THROWS_AS(RunRecord::from_json(json::parse(R"({"label": "adam"})")), ValueError);
}

TEST_CASE("metrics are recomputable from the saved checkpoint") {
  TempDir tmp("ckpt");
  auto c = small_config();
  c.output_dir = tmp.path.string();
  const auto out = train_and_save(c);
  const auto ck = load_checkpoint(tmp.path / "checkpoint.bin");
  CHECK(ck.params.flatten() == out.params.flatten());
  const auto data = prepare_data(c.dataset);
  const CtrModel model(ck.spec, data.splits.train.schema.vocab_sizes());
  const auto m = evaluate(model, ck.params, data.splits.test);
  CHECK(m.auc == out.record.test.auc);
  CHECK(m.logloss == out.record.test.logloss);
  const auto recs = load_records(tmp.path / "record.json");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].metrics_json() == out.record.metrics_json());
}

TEST_CASE("scan of an untrained model is finite") {
  auto c = small_config();
  c.scan.top_k = 5;
  const auto data = prepare_data(c.dataset);
  const CtrModel model(c.model, data.splits.train.schema.vocab_sizes());
  const Checkpoint ck{c.model, model.init_params(c.train.seed)};
  const auto rep = scan(c, ck, data);
  REQUIRE(rep.rows.size() == 5);
  for (const auto& r : rep.rows) {
    CHECK(std::isfinite(r.lambda));
    CHECK(std::isfinite(r.grad_norm));
    CHECK(r.count > 0);
  }
}

TEST_CASE("scan returns top-K rows by frequency") {
  auto c = small_config();
  c.scan.top_k = 20;
  c.scan.field = 2;
  const auto data = prepare_data(c.dataset);
  const auto out = train(c, data);
  const Checkpoint ck{c.model, out.params};
  const auto rep = scan(c, ck, data);
  CHECK(rep.rows.size() == 20);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i - 1].count >= rep.rows[i].count);
  CHECK(rep.rows[0].count == data.train_freq.field_max(2));

  // vocabulary smaller than K gives one row per present feature
  c.scan.top_k = 500;
  const auto all = scan(c, ck, data);
  CHECK(all.rows.size() == data.train_freq.top_k(2, 500).size());
  CHECK(all.rows.size() <= 50);
}

TEST_CASE("scan rejects a mismatched checkpoint") {
  auto c = small_config();
  const auto data = prepare_data(c.dataset);
  const CtrModel model(c.model, data.splits.train.schema.vocab_sizes());
  auto other = c.model;
  other.embed_dim = 8;
  CHECK_THROWS_AS(scan(c, Checkpoint{other, model.init_params(1)}, data), ValueError);
  const CtrModel wrong(c.model, {3, 3, 3, 3});
  CHECK_THROWS_AS(scan(c, Checkpoint{c.model, wrong.init_params(1)}, data), ValueError);
}

TEST_CASE("comparing a run with itself") {
  const auto r = fake_record("dnn", 1, 0.71);
  const auto cmp = compare({r, r, fake_record("dnn", 2, 0.70), fake_record("dnn", 2, 0.70)});
  REQUIRE(cmp.tests.size() == 1);
  CHECK(cmp.arms[1].name == "adam#2");
  CHECK(cmp.tests[0].t == 0.0);
  CHECK(cmp.tests[0].p == 1.0);
}

TEST_CASE("two optimizers over three models and two seeds give six pairs") {
  std::vector<RunRecord> recs;
  double bump = 0.0;
  for (const char* m : {"dnn", "pnn", "deepfm"}) {
    for (std::uint64_t s : {1u, 2u}) {
      bump += 0.001;
      recs.push_back(fake_record(m, s, 0.70 + bump));
      recs.push_back(fake_record(m, s, 0.70 + 2 * bump, Wrapper::Helen));
    }
  }
  const auto cmp = compare(recs);
  CHECK(cmp.cells.size() == 6);
  CHECK(cmp.arms[cmp.treatment].name == "helen");
  REQUIRE(cmp.tests.size() == 1);
  CHECK(cmp.tests[0].pairs == 6);
  CHECK(cmp.tests[0].baseline == "adam");
  CHECK(cmp.tests[0].t > 0.0);
  std::ostringstream out;
  cmp.write(out);
  CHECK(out.str().rfind("model,dataset,seed,adam_logloss_x100,adam_auc_x100,helen_logloss_x100,helen_auc_x100\n", 0) ==
        0);
  CHECK(out.str().find("# paired_t_test,helen,adam,6,") != std::string::npos);
}

TEST_CASE("variance column uses the sample convention") {
  std::vector<RunRecord> recs{fake_record("dnn", 1, 0.6352), fake_record("pnn", 1, 0.6357),
                              fake_record("deepfm", 1, 0.6366), fake_record("dnn", 1, 0.64, Wrapper::Sam),
                              fake_record("pnn", 1, 0.65, Wrapper::Sam), fake_record("deepfm", 1, 0.63, Wrapper::Sam)};
  const auto cmp = compare(recs);
  const auto it = std::find_if(cmp.variances.begin(), cmp.variances.end(), [](const VarianceRow& v) { return v.arm == "adam"; });
  REQUIRE(it != cmp.variances.end());
  CHECK(it->models == 3);
  CHECK(it->variance == doctest::Approx(0.00503333).epsilon(1e-4));
}

TEST_CASE("mismatched grids list the missing cells") {
  std::vector<RunRecord> recs{fake_record("dnn", 1, 0.7), fake_record("pnn", 1, 0.7),
                              fake_record("dnn", 1, 0.71, Wrapper::Sam)};
  std::string msg;
  try {
    compare(recs);
  } catch (const ValueError& e) {
    msg = e.what();
  }
  CHECK(msg.find("sam: model=pnn dataset=zipf seed=1") != std::string::npos);
  CHECK_THROWS_AS(compare({fake_record("dnn", 1, 0.7)}), ValueError);
}

TEST_CASE("generated CSV reloads with the same frequencies") {
  TempDir tmp("gen");
  auto c = small_config();
  generate(c, tmp.path / "a.csv");
  generate(c, tmp.path / "b.csv");
  CHECK(slurp(tmp.path / "a.csv") == slurp(tmp.path / "b.csv"));
  const auto original = generate_zipf_dataset(c.dataset.zipf);
  const auto back = load_csv(tmp.path / "a.csv", {"label", 1});
  CHECK(back.size() == original.size());
  CHECK(back.labels() == original.labels());
  const auto fa = count_frequencies(original);
  const auto fb = count_frequencies(back);
  for (std::size_t j = 0; j < fa.num_fields(); ++j) {
    std::map<std::string, std::uint64_t> ta, tb;
    for (std::uint32_t k = 0; k < original.schema.vocab(j); ++k) {
      if (fa.count(j, k)) ta[original.schema.decode(j, k)] = fa.count(j, k);
    }
    for (std::uint32_t k = 0; k < back.schema.vocab(j); ++k) {
      if (fb.count(j, k)) tb[back.schema.decode(j, k)] = fb.count(j, k);
    }
    CHECK(ta == tb);
  }

  // the CSV source trains like any other
  auto csv = c;
  csv.dataset.source = "csv";
  csv.dataset.csv_path = (tmp.path / "a.csv").string();
  csv.dataset.csv.min_count = 1;
  CHECK(train(csv).record.test.auc > 0.5);
}

TEST_CASE("generate rejects zero samples and CSV sources") {
  TempDir tmp("gen0");
  auto c = small_config();
  c.dataset.zipf.samples = 0;
  CHECK_THROWS_AS(generate(c, tmp.path / "x.csv"), ValueError);
  c = small_config();
  c.dataset.source = "csv";
  c.dataset.csv_path = "whatever.csv";
  CHECK_THROWS_AS(generate(c, tmp.path / "x.csv"), ValueError);
}

TEST_CASE("command line end to end") {
  TempDir tmp("cli");
  const fs::path cfg = tmp.path / "config.json";
  auto c = small_config();
  c.output_dir = (tmp.path / "default").string();
  c.scan.top_k = 10;
  save_config(c, cfg);
  const fs::path log = tmp.path / "log.txt";
  const std::string conf = " --config " + cfg.string();

  CHECK(run_cli("generate" + conf, log) == 0);
  CHECK(fs::exists(tmp.path / "default" / "data.csv"));

  const fs::path adam = tmp.path / "adam";
  const fs::path helen = tmp.path / "helen";
  CHECK(run_cli("train" + conf + " --seed 4 --output-dir " + adam.string(), log) == 0);
  CHECK(run_cli("train" + conf + " --seed 4 --output-dir " + helen.string() +
                    " --set optimizer.wrapper=helen --set optimizer.xi=0.5",
                log) == 0);
  const auto recs = load_records(adam / "record.json");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].config.train.seed == 4);
  CHECK(fs::exists(helen / "checkpoint.bin"));
  CHECK(load_records(helen / "record.json")[0].label == "helen");

  // a dedicated flag beats --set
  CHECK(run_cli("train" + conf + " --set train.seed=9 --seed 5 --output-dir " + (tmp.path / "prec").string(), log) == 0);
  CHECK(load_records(tmp.path / "prec" / "record.json")[0].config.train.seed == 5);

  const std::string ck = " --checkpoint " + (adam / "checkpoint.bin").string();
  CHECK(run_cli("scan" + conf + ck + " --field 1 --top-k 7 --out " + (tmp.path / "s1.csv").string(), log) == 0);
  CHECK(run_cli("scan" + conf + ck + " --field 1 --top-k 7 --out " + (tmp.path / "s2.csv").string(), log) == 0);
  const std::string s1 = slurp(tmp.path / "s1.csv");
  CHECK(s1 == slurp(tmp.path / "s2.csv"));
  CHECK(s1.rfind("field,feature,count,grad_norm,lambda,iters,converged\n", 0) == 0);
  CHECK(std::count(s1.begin(), s1.end(), '\n') - std::count(s1.begin(), s1.end(), '#') == 8);
  CHECK(run_cli("scan" + conf + ck, log) == 0);
  CHECK(fs::exists(tmp.path / "default" / "scan_field0.csv"));

  const fs::path helen5 = tmp.path / "helen5";
  CHECK(run_cli("train" + conf + " --seed 5 --output-dir " + helen5.string() + " --set optimizer.wrapper=helen --set optimizer.xi=0.5", log) ==
        0);
  const auto rec = [](const fs::path& d) { return " " + (d / "record.json").string(); };
  CHECK(run_cli("compare" + rec(adam) + rec(helen) + rec(tmp.path / "prec") + rec(helen5) + " --out " +
                    (tmp.path / "cmp.csv").string(),
                log) == 0);
  const std::string table = slurp(tmp.path / "cmp.csv");
  CHECK(table.find("\ndnn,zipf,4,") != std::string::npos);
  CHECK(table.find("\ndnn,zipf,5,") != std::string::npos);
  CHECK(table.find("# paired_t_test,helen,adam,2,") != std::string::npos);
  // one cell cannot give a t statistic
  CHECK(run_cli("compare" + rec(adam) + rec(helen), log) == 1);
}

TEST_CASE("command line failures") {
  TempDir tmp("clifail");
  const fs::path log = tmp.path / "log.txt";
  CHECK(run_cli("", log) != 0);
  CHECK(run_cli("train --config " + (tmp.path / "missing.json").string(), log) == 1);
  CHECK(slurp(log).find("cannot open config") != std::string::npos);

  const fs::path cfg = tmp.path / "bad.json";
  std::ofstream(cfg) << R"({"optimizer": {"lr": 0}})";
  CHECK(run_cli("train --config " + cfg.string(), log) == 1);
  CHECK(slurp(log).find("optimizer.lr: must be > 0") != std::string::npos);
  CHECK(run_cli("train --config " + cfg.string() + " --set nokeyvalue", log) == 2);
}
