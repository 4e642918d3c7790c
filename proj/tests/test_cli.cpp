#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dispute/cli.hpp"
#include "dispute/corpus.hpp"
#include "dispute/error.hpp"
#include "dispute/version.hpp"

using namespace dispute;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fresh scratch directory per test run; contents survive for debugging.
fs::path scratch() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() /
             ("dispute_cli_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

long count_lines(const fs::path& path) {
  const std::string text = read_text(path);
  long n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

Corpus keyed_corpus(int n_convs, int utts_per_conv, bool with_flag) {
  Corpus corpus;
  int counter = 0;
  for (int ci = 0; ci < n_convs; ++ci) {
    Conversation c;
    c.conv_id = "conv" + std::to_string(ci);
    if (with_flag) c.escalated = ci % 2 == 0;
    for (int ui = 0; ui < utts_per_conv; ++ui) {
      const int t = counter++ % kNumTactics;
      Utterance u;
      u.index = ui;
      u.speaker = ui % 2 == 0 ? "a" : "b";
      u.text = "key" + std::to_string(t) + " some filler text";
      u.labels = LabelVector{static_cast<Tactic>(t)};
      c.utterances.push_back(std::move(u));
    }
    corpus.conversations.push_back(std::move(c));
  }
  return corpus;
}

const fs::path& corpus_path() {
  static const fs::path path = [] {
    auto p = scratch() / "corpus.jsonl";
    write_corpus(keyed_corpus(20, 4, true), p);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"validate"}) == 2);                       // missing positional
  CHECK(run({"split", corpus_path().string()}) == 2);  // missing --out-dir
  CHECK(run({"--help"}) == 0);
}

TEST_CASE("validate accepts a clean corpus and flags violations") {
  CHECK(run({"validate", corpus_path().string()}) == 0);

  const fs::path bad = scratch() / "bad.jsonl";
  write_text(bad, R"({"conv_id": "b", "utterances": [{"speaker": "a", "text": "x", "tactics": []}, {"speaker": "b", "text": "y", "tactics": ["other"]}]})"
                      "\n");
  CHECK(run({"validate", bad.string()}) == 1);

  const fs::path unknown = scratch() / "unknown.jsonl";
  write_text(unknown, R"({"conv_id": "u", "utterances": [{"speaker": "a", "text": "x", "tactics": ["Counter argument"]}, {"speaker": "b", "text": "y", "tactics": ["other"]}]})"
                          "\n");
  CHECK(run({"validate", unknown.string()}) == 1);
  // The same file passes with the map-to-other policy.
  CHECK(run({"validate", unknown.string(), "--unknown", "other"}) == 0);

  CHECK(run({"validate", (scratch() / "missing.jsonl").string()}) == 1);
}

TEST_CASE("stats writes json plus a manifest") {
  const fs::path out = scratch() / "stats.json";
  CHECK(run({"stats", corpus_path().string(), "--out", out.string()}) == 0);

  const json j = json::parse(read_text(out));
  CHECK(j.at("kind") == "stats");
  CHECK(j.at("n_conversations") == 20);
  CHECK(j.at("n_utterances") == 80);
  REQUIRE(j.at("label_counts").is_array());
  CHECK(j.at("label_counts").size() == kNumTactics);

  const fs::path manifest = scratch() / "stats.json.manifest.json";
  REQUIRE(fs::exists(manifest));
  const json m = json::parse(read_text(manifest));
  CHECK(m.at("toolkit_version") == kVersion);
  CHECK(m.at("command").get<std::string>().rfind("dispute stats", 0) == 0);
  REQUIRE(m.at("inputs").size() == 1);
  CHECK(m.at("inputs")[0].at("path") == corpus_path().string());
  CHECK_FALSE(m.at("inputs")[0].at("checksum").get<std::string>().empty());
  CHECK(m.at("outputs")[0] == out.string());
  CHECK_FALSE(m.at("created_utc").get<std::string>().empty());

  // Data outputs are byte-identical across reruns.
  const std::string first = read_text(out);
  CHECK(run({"stats", corpus_path().string(), "--out", out.string()}) == 0);
  CHECK(read_text(out) == first);
}

TEST_CASE("split partitions deterministically") {
  const fs::path dir = scratch() / "split";
  CHECK(run({"split", corpus_path().string(), "--out-dir", dir.string(), "--seed",
             "42"}) == 0);
  CHECK(count_lines(dir / "train.jsonl") == 14);
  CHECK(count_lines(dir / "dev.jsonl") == 4);
  CHECK(count_lines(dir / "test.jsonl") == 2);
  REQUIRE(fs::exists(dir / "manifest.json"));
  const json m = json::parse(read_text(dir / "manifest.json"));
  CHECK(m.at("seed") == 42);
  CHECK(m.at("outputs").size() == 3);

  const std::string train_before = read_text(dir / "train.jsonl");
  CHECK(run({"split", corpus_path().string(), "--out-dir", dir.string(), "--seed",
             "42"}) == 0);
  CHECK(read_text(dir / "train.jsonl") == train_before);

  // Malformed ratios are usage errors.
  CHECK(run({"split", corpus_path().string(), "--out-dir", dir.string(), "--ratios",
             "0.5,0.5"}) == 2);
  CHECK(run({"split", corpus_path().string(), "--out-dir", dir.string(), "--ratios",
             "a,b,c"}) == 2);
}

TEST_CASE("analyze emits the requested sections") {
  const fs::path out = scratch() / "analysis.json";
  CHECK(run({"analyze", corpus_path().string(), "--out", out.string(), "--resamples",
             "200", "--seed", "3"}) == 0);
  const json j = json::parse(read_text(out));
  CHECK(j.at("kind") == "analysis");
  CHECK(j.at("mode") == "micro");
  CHECK(j.contains("rebuttal_mean"));
  CHECK(j.contains("pmi"));
  CHECK(j.contains("attacks"));
  CHECK(j.contains("users"));
  CHECK(j.contains("mirroring"));
  REQUIRE(j.at("rebuttal_mean").contains("correlation"));
  CHECK(j.at("rebuttal_mean").at("conversations").size() == 20);
  CHECK(j.at("pmi").size() == kNumTactics - 2);

  // A single section, macro mode.
  const fs::path pmi_out = scratch() / "pmi.json";
  CHECK(run({"analyze", corpus_path().string(), "--which", "pmi", "--mode", "macro",
             "--out", pmi_out.string()}) == 0);
  const json pj = json::parse(read_text(pmi_out));
  CHECK(pj.at("mode") == "macro");
  CHECK(pj.contains("pmi"));
  CHECK_FALSE(pj.contains("attacks"));

  // The thread count never changes the result bytes.
  const fs::path t1 = scratch() / "analysis_t1.json";
  const fs::path t4 = scratch() / "analysis_t4.json";
  CHECK(run({"analyze", corpus_path().string(), "--out", t1.string(), "--resamples",
             "500", "--seed", "11", "--threads", "1"}) == 0);
  CHECK(run({"analyze", corpus_path().string(), "--out", t4.string(), "--resamples",
             "500", "--seed", "11", "--threads", "4"}) == 0);
  CHECK(read_text(t1) == read_text(t4));
}

TEST_CASE("train evaluate predict compare round trip") {
  const fs::path ckpt = scratch() / "br.ckpt";
  const std::vector<std::string> train_cmd = {
      "train",           "--task",       "tactics",
      "--data",          corpus_path().string(),
      "--dev",           corpus_path().string(),
      "--out",           ckpt.string(),
      "--hidden-dims",   "8",
      "--max-epochs",    "2",
      "--batch-size",    "16",
      "--vocab-min-freq", "1",
      "--seed",          "7"};
  CHECK(run(train_cmd) == 0);
  REQUIRE(fs::exists(ckpt));

  const json manifest = json::parse(read_text(ckpt.string() + ".manifest.json"));
  CHECK(manifest.at("config").at("task") == "tactics");
  CHECK(manifest.at("config").at("max_epochs") == 2);
  CHECK(manifest.at("config").at("hidden_dims") == json::array({8}));
  CHECK(manifest.at("seed") == 7);

  // Training is reproducible byte-for-byte.
  const std::string ckpt_bytes = read_text(ckpt);
  CHECK(run(train_cmd) == 0);
  CHECK(read_text(ckpt) == ckpt_bytes);

  const fs::path metrics = scratch() / "metrics.json";
  CHECK(run({"evaluate", "--model", ckpt.string(), "--data", corpus_path().string(),
             "--out", metrics.string()}) == 0);
  const json mj = json::parse(read_text(metrics));
  CHECK(mj.at("kind") == "tactics");
  CHECK(mj.at("n_samples") == 80);
  CHECK(mj.at("per_sample_jaccard").size() == 80);
  CHECK(mj.at("per_label_counts").size() == kNumTactics);

  const fs::path preds = scratch() / "preds.jsonl";
  CHECK(run({"predict", "--model", ckpt.string(), "--data", corpus_path().string(),
             "--out", preds.string()}) == 0);
  CHECK(count_lines(preds) == 20);
  std::ifstream in(preds);
  std::string line;
  REQUIRE(std::getline(in, line));
  const json row = json::parse(line);
  CHECK(row.at("conv_id") == "conv0");
  CHECK(row.at("tactics").is_array());
  CHECK(row.at("tactics").size() == 4);

  // Comparing a model against itself: zero mean difference, p = 1.
  const fs::path cmp = scratch() / "comparison.json";
  CHECK(run({"compare", "--metrics", metrics.string(), metrics.string(), "--resamples",
             "300", "--seed", "1", "--out", cmp.string()}) == 0);
  const json cj = json::parse(read_text(cmp));
  CHECK(cj.at("kind") == "comparison");
  CHECK(cj.at("n") == 80);
  CHECK(cj.at("mean_diff") == 0.0);
  CHECK(cj.at("p_value") == 1.0);

  // Render both reports as markdown.
  const fs::path md = scratch() / "metrics.md";
  CHECK(run({"report", metrics.string(), "--out", md.string()}) == 0);
  const std::string markdown = read_text(md);
  CHECK(markdown.find("| metric | value |") != std::string::npos);
  CHECK(markdown.find("jaccard") != std::string::npos);
  CHECK(markdown.find("| label | gold | pred | correct |") != std::string::npos);
}

TEST_CASE("escalation training through the cli") {
  const fs::path ckpt = scratch() / "esc.ckpt";
  CHECK(run({"train", "--task", "escalation", "--data", corpus_path().string(),
             "--dev", corpus_path().string(), "--out", ckpt.string(), "--hidden-dims",
             "8", "--head-hidden", "4", "--attention-dim", "4", "--max-epochs", "2",
             "--vocab-min-freq", "1", "--seed", "5"}) == 0);

  const fs::path metrics = scratch() / "esc_metrics.json";
  CHECK(run({"evaluate", "--model", ckpt.string(), "--data", corpus_path().string(),
             "--out", metrics.string()}) == 0);
  const json mj = json::parse(read_text(metrics));
  CHECK(mj.at("kind") == "escalation");
  CHECK(mj.at("n") == 20);
  CHECK(mj.at("scores").size() == 20);

  const fs::path preds = scratch() / "esc_preds.jsonl";
  CHECK(run({"predict", "--model", ckpt.string(), "--data", corpus_path().string(),
             "--out", preds.string()}) == 0);
  std::ifstream in(preds);
  std::string line;
  REQUIRE(std::getline(in, line));
  const json row = json::parse(line);
  const double p = row.at("escalation_probability").get<double>();
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);

  // Escalation metrics cannot feed the tactics comparison.
  CHECK(run({"compare", "--metrics", metrics.string(), metrics.string()}) == 1);
}

TEST_CASE("train config file merges under flags") {
  const fs::path cfg = scratch() / "config.json";
  write_text(cfg, R"({"max_epochs": 7, "hidden_dims": [4], "learning_rate": 0.01})"
                      "\n");
  const fs::path ckpt = scratch() / "cfg.ckpt";
  CHECK(run({"train", "--task", "tactics", "--data", corpus_path().string(), "--dev",
             corpus_path().string(), "--out", ckpt.string(), "--config", cfg.string(),
             "--max-epochs", "2", "--vocab-min-freq", "1", "--seed", "1"}) == 0);
  const json manifest = json::parse(read_text(ckpt.string() + ".manifest.json"));
  CHECK(manifest.at("config").at("max_epochs") == 2);  // flag wins
  CHECK(manifest.at("config").at("hidden_dims") == json::array({4}));
  CHECK(manifest.at("config").at("learning_rate") == 0.01);

  const fs::path bad_cfg = scratch() / "bad_config.json";
  write_text(bad_cfg, R"({"bogus_knob": 1})" "\n");
  CHECK(run({"train", "--task", "tactics", "--data", corpus_path().string(), "--dev",
             corpus_path().string(), "--out", ckpt.string(), "--config",
             bad_cfg.string()}) == 1);
}

TEST_CASE("seed falls back to the environment") {
  const fs::path dir = scratch() / "env_split";
  ::setenv("DISPUTE_SEED", "123", 1);
  CHECK(run({"split", corpus_path().string(), "--out-dir", dir.string()}) == 0);
  json m = json::parse(read_text(dir / "manifest.json"));
  CHECK(m.at("seed") == 123);

  // An explicit flag beats the environment.
  CHECK(run({"split", corpus_path().string(), "--out-dir", dir.string(), "--seed",
             "5"}) == 0);
  m = json::parse(read_text(dir / "manifest.json"));
  CHECK(m.at("seed") == 5);

  ::setenv("DISPUTE_SEED", "not-a-number", 1);
  CHECK(run({"split", corpus_path().string(), "--out-dir", dir.string()}) == 2);
  ::unsetenv("DISPUTE_SEED");
}

TEST_CASE("render_report formats reals and handles nulls") {
  const std::string md = render_report(
      R"({"kind": "stats", "n_conversations": 3, "multilabel_fraction": 0.5, "label_counts": []})");
  CHECK(md.find("| n_conversations | 3 |") != std::string::npos);
  CHECK(md.find("| multilabel_fraction | 0.5000 |") != std::string::npos);

  const std::string generic =
      render_report(R"({"kind": "mystery", "alpha": null, "beta": true})");
  CHECK(generic.find("n/a") != std::string::npos);
  CHECK(generic.find("yes") != std::string::npos);

  CHECK_THROWS_AS(render_report("not json"), Error);
  CHECK_THROWS_AS(render_report("[1,2,3]"), Error);
}
