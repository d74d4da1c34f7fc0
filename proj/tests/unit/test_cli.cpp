#include "doctest.h"

#include <fstream>
#include <sstream>

#include "detoxr/cli.hpp"
#include "detoxr/eval.hpp"
#include "detoxr/record.hpp"
#include "detoxr/util.hpp"
#include "fixtures.hpp"

using namespace detoxr;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({"synth", "--bogus"}).code == 2);
  CHECK(run({"nope"}).code == 2);
  CHECK(run({"eval"}).code == 2);
  CHECK(run({"eval", "--dataset", "x.jsonl", "--reward", "auc"}).code == 2);
}

TEST_CASE("synth, split, eval and compare") {
  auto dir = fixtures::scratch_dir("cli").string();
  REQUIRE(run({"--seed", "3", "--out-dir", dir, "synth", "--n", "120"}).code == 0);
  CHECK(std::filesystem::exists(dir + "/dataset.jsonl"));
  CHECK(std::filesystem::exists(dir + "/synth_config.json"));
  CHECK(read_dataset(dir + "/dataset.jsonl").cases.size() == 120);

  REQUIRE(run({"--seed", "3", "--out-dir", dir, "split", "--dataset", dir + "/dataset.jsonl"}).code == 0);
  CHECK(std::filesystem::exists(dir + "/split.json"));

  auto e = run({"--out-dir", dir, "eval", "--dataset", dir + "/dataset.jsonl", "--split-file", dir + "/split.json",
                "--predictor", "history"});
  REQUIRE(e.code == 0);
  auto report = report_from_json(nlohmann::json::parse(read_text_file(dir + "/report.json")));
  CHECK(report.rows.size() == 36);
  CHECK(report_is_consistent(report));

  auto c = run({"--out-dir", dir, "compare", "--a", dir + "/predictions.jsonl", "--b", dir + "/predictions.jsonl",
                "--dataset", dir + "/dataset.jsonl", "--sample-size", "10"});
  CHECK(c.code == 0);
  CHECK(std::filesystem::exists(dir + "/comparison.csv"));
}

TEST_CASE("score subcommand") {
  auto dir = fixtures::scratch_dir("cli-score").string();
  auto r = run({"--out-dir", dir, "score", "--completion", "{\"opiates\": true}", "--truth", "opiates"});
  REQUIRE(r.code == 0);
  std::ifstream in(dir + "/scores.jsonl");
  std::string line;
  REQUIRE(std::getline(in, line));
  auto doc = nlohmann::json::parse(line);
  CHECK(doc["r_task"] == 1.0);
  CHECK(doc["r_format"] == 0.25);
}

TEST_CASE("unlabelled cases are reported by id") {
  auto dir = fixtures::scratch_dir("cli-unlabelled").string();
  DatasetManifest m;
  Case c = fixtures::sample_case();
  c.case_id = "needs-labels";
  c.labels.reset();
  m.cases.push_back(c);
  write_dataset(dir + "/d.jsonl", m);
  auto r = run({"--out-dir", dir, "eval", "--dataset", dir + "/d.jsonl", "--predictor", "history"});
  CHECK(r.code == 1);
  CHECK(r.err.find("needs-labels") != std::string::npos);
}

TEST_CASE("the installed binary answers --help") {
  CHECK(std::system((std::string(DETOXR_CLI_PATH) + " --help > /dev/null").c_str()) == 0);
}
