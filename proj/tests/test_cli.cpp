#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "eventformer/cli.hpp"
#include "eventformer/config.hpp"
#include "eventformer/dataset.hpp"
#include "eventformer/metrics.hpp"
#include "json.hpp"

using namespace evf;

namespace {

int run(std::vector<std::string> args) { return cli::run(args); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool exists(const std::string& path) { return std::filesystem::exists(path); }

// A dataset small enough that every subcommand finishes in well under a second.
void make_data(const std::string& dir, const std::string& seed = "5") {
  REQUIRE(run({"gen", "--out", dir, "--seed", seed,
               "--set", "generator.n_train=10", "--set", "generator.n_val=3",
               "--set", "generator.n_test=3", "--set", "generator.T=20",
               "--set", "generator.F=5", "--set", "generator.min_len=3",
               "--set", "generator.max_len=8"}) == 0);
}

std::vector<std::string> tiny_model_sets() {
  return {"--set", "run.N0=4",  "--set", "run.d_m=12", "--set", "run.L=1",
          "--set", "run.heads=2", "--set", "run.d_p=4",
          "--set", "train.batch_size=4"};
}

void write_gt_as_detections(const std::string& data_dir, const std::string& out_path) {
  const auto samples = read_dataset(data_dir + "/test.jsonl", 4);
  std::vector<SequenceDetections> dets;
  for (const auto& s : samples) {
    SequenceDetections d{s.id, {}};
    for (const auto& e : s.events) d.events.push_back({e.start, e.end, e.class_id, 1.0});
    dets.push_back(std::move(d));
  }
  write_detections(out_path, dets);
}

}  // namespace

TEST_CASE("the pipeline runs end to end: gen, train, detect, eval") {
  const std::string root = "cli_pipeline.tmp";
  std::filesystem::remove_all(root);
  make_data(root + "/data");
  for (const auto* f : {"train.jsonl", "val.jsonl", "test.jsonl", "manifest.json",
                        "config.json", "run_info.json"})
    CHECK(exists(root + "/data/" + f));
  CHECK(slurp(root + "/data/run_info.json").find("\"tool_version\"") != std::string::npos);
  CHECK(slurp(root + "/data/run_info.json").find("\"gen\"") != std::string::npos);

  auto train_args = std::vector<std::string>{"train", "--data", root + "/data",
                                             "--out", root + "/run", "--seed", "11",
                                             "--set", "train.epochs=2"};
  for (const auto& a : tiny_model_sets()) train_args.push_back(a);
  REQUIRE(run(train_args) == 0);
  CHECK(exists(root + "/run/model-final.evfc"));
  CHECK(exists(root + "/run/metrics.jsonl"));
  // --seed overrides both the model and the shuffle seeds in the echo
  const AppConfig echoed = config_from_json(slurp(root + "/run/config.json"));
  CHECK(echoed.run.seed == 11);
  CHECK(echoed.train.seed == 11);
  CHECK(echoed.run.N0 == 4);

  REQUIRE(run({"detect", "--ckpt", root + "/run/model-final.evfc", "--data", root + "/data",
               "--split", "test", "--out", root + "/det"}) == 0);
  CHECK(exists(root + "/det/detections.jsonl"));

  REQUIRE(run({"eval", "--data", root + "/data", "--split", "test",
               "--dets", root + "/det/detections.jsonl", "--out", root + "/eval"}) == 0);
  const EvalReport rep = report_from_json(slurp(root + "/eval/eval.json"));
  CHECK(rep.map_alphas.size() == 5);
  CHECK(rep.ar_at_an.size() == 100);
  CHECK(exists(root + "/eval/eval.txt"));
  std::filesystem::remove_all(root);
}

TEST_CASE("evaluating the ground truth against itself scores perfectly") {
  const std::string root = "cli_gt_eval.tmp";
  std::filesystem::remove_all(root);
  make_data(root + "/data");
  write_gt_as_detections(root + "/data", root + "/gt_dets.jsonl");
  REQUIRE(run({"eval", "--data", root + "/data", "--split", "test",
               "--dets", root + "/gt_dets.jsonl", "--out", root + "/eval"}) == 0);
  const EvalReport rep = report_from_json(slurp(root + "/eval/eval.json"));
  for (double m : rep.map)
    if (!std::isnan(m)) CHECK(std::abs(m - 100.0) < 1e-9);
  // AR@1 on a multi-event sequence cannot reach 100, but the budget always
  // covers every event by AN=100
  CHECK(std::abs(rep.ar_at_an.back() - 100.0) < 1e-9);
  CHECK(rep.auc > 50.0);
  std::filesystem::remove_all(root);
}

TEST_CASE("configuration mistakes exit with status 2, runtime failures with 1") {
  const std::string root = "cli_errors.tmp";
  std::filesystem::remove_all(root);
  CHECK(run({"gen", "--out", root, "--set", "bogus.key=1"}) == 2);
  CHECK(run({"gen", "--out", root, "--set", "run.d_m=not_a_number"}) == 2);
  CHECK(run({"gen", "--out", root, "--set", "no_equals_sign"}) == 2);
  CHECK(run({"gen", "--out", root, "--config", root + "/missing.json"}) == 2);
  std::filesystem::create_directories(root);
  std::ofstream(root + "/broken.json") << "{ not json";
  CHECK(run({"gen", "--out", root, "--config", root + "/broken.json"}) == 2);
  CHECK(run({"gen"}) == 2);           // missing required --out
  CHECK(run({"not_a_command"}) == 2); // unknown subcommand
  CHECK(run({"detect", "--ckpt", root + "/nope.evfc", "--data", root, "--out", root}) == 1);
  std::filesystem::remove_all(root);
}

TEST_CASE("both baselines train, decode and report") {
  const std::string root = "cli_baseline.tmp";
  std::filesystem::remove_all(root);
  make_data(root + "/data");
  for (const std::string scheme : {"frame2event", "unit2event"}) {
    REQUIRE(run({"baseline", "--scheme", scheme, "--data", root + "/data",
                 "--out", root + "/" + scheme, "--set", "run.d_m=8", "--set", "run.N0=5",
                 "--set", "train.epochs=2"}) == 0);
    CHECK(exists(root + "/" + scheme + "/detections.jsonl"));
    CHECK(exists(root + "/" + scheme + "/eval.json"));
    CHECK(slurp(root + "/" + scheme + "/eval.txt").find(scheme) != std::string::npos);
  }
  CHECK(run({"baseline", "--scheme", "nonsense", "--data", root + "/data",
             "--out", root + "/x"}) == 2);
  std::filesystem::remove_all(root);
}

TEST_CASE("sweep writes one row and one run directory per value") {
  const std::string root = "cli_sweep.tmp";
  std::filesystem::remove_all(root);
  make_data(root + "/data");
  auto args = std::vector<std::string>{"sweep", "--data", root + "/data",
                                       "--out", root + "/sweep", "--param", "L",
                                       "--values", "1,2", "--set", "train.epochs=1"};
  for (const auto& a : tiny_model_sets()) args.push_back(a);
  REQUIRE(run(args) == 0);
  const auto rows = nlohmann::json::parse(slurp(root + "/sweep/sweep.json"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["L"] == 1);
  CHECK(rows[1]["L"] == 2);
  CHECK(rows[0].contains("map50"));
  CHECK(rows[0].contains("auc"));
  CHECK(exists(root + "/sweep/L-1/model-final.evfc"));
  CHECK(exists(root + "/sweep/L-2/model-final.evfc"));
  CHECK(!slurp(root + "/sweep/sweep.txt").empty());
  CHECK(run({"sweep", "--data", root + "/data", "--out", root + "/x",
             "--param", "dropout"}) == 2);
  std::filesystem::remove_all(root);
}

TEST_CASE("plot emits all three figure kinds as SVG") {
  const std::string root = "cli_plot.tmp";
  std::filesystem::remove_all(root);
  make_data(root + "/data");
  write_gt_as_detections(root + "/data", root + "/dets.jsonl");
  const std::string id = read_dataset(root + "/data/test.jsonl", 4)[0].id;

  REQUIRE(run({"plot", "--kind", "timeline", "--data", root + "/data", "--split", "test",
               "--dets", root + "/dets.jsonl", "--id", id, "--out", root + "/figs"}) == 0);

  REQUIRE(run({"eval", "--data", root + "/data", "--split", "test",
               "--dets", root + "/dets.jsonl", "--out", root + "/eval"}) == 0);
  REQUIRE(run({"plot", "--kind", "ar_curve", "--eval", "gt=" + root + "/eval/eval.json",
               "--out", root + "/figs"}) == 0);

  auto train_args = std::vector<std::string>{"train", "--data", root + "/data",
                                             "--out", root + "/run",
                                             "--set", "train.epochs=1"};
  for (const auto& a : tiny_model_sets()) train_args.push_back(a);
  REQUIRE(run(train_args) == 0);
  REQUIRE(run({"plot", "--kind", "attention", "--data", root + "/data", "--split", "test",
               "--ckpt", root + "/run/model-final.evfc", "--id", id,
               "--out", root + "/figs"}) == 0);

  for (const auto* f : {"timeline.svg", "ar_curve.svg", "attention.svg"}) {
    const std::string svg = slurp(root + "/figs/" + f);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  CHECK(run({"plot", "--kind", "sculpture", "--out", root + "/x"}) == 2);
  std::filesystem::remove_all(root);
}

TEST_CASE("rerunning gen from the echoed config reproduces the dataset") {
  const std::string root = "cli_rerun.tmp";
  std::filesystem::remove_all(root);
  make_data(root + "/a");
  REQUIRE(run({"gen", "--config", root + "/a/config.json", "--seed", "5",
               "--out", root + "/b"}) == 0);
  for (const auto* f : {"train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"})
    CHECK(slurp(root + "/a/" + f) == slurp(root + "/b/" + f));
  std::filesystem::remove_all(root);
}
