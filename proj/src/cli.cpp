#include "dispute/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dispute/analysis.hpp"
#include "dispute/corpus.hpp"
#include "dispute/error.hpp"
#include "dispute/stats.hpp"
#include "dispute/tasks.hpp"
#include "dispute/util.hpp"
#include "dispute/version.hpp"

namespace dispute {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Flag values that are malformed in ways CLI11 cannot express; exit code 2.
struct UsageError {
  std::string message;
};

std::uint64_t env_seed_default() {
  const char* raw = std::getenv("DISPUTE_SEED");
  if (raw == nullptr || *raw == '\0') return 0;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0')
    throw Error("DISPUTE_SEED must be a non-negative integer, got '" + std::string(raw) +
                "'");
  return static_cast<std::uint64_t>(value);
}

std::string join_command(const std::vector<std::string>& args) {
  std::string out = "dispute";
  for (const std::string& a : args) {
    out += ' ';
    if (a.find(' ') != std::string::npos) {
      out += '\'';
      out += a;
      out += '\'';
    } else {
      out += a;
    }
  }
  return out;
}

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

ordered_json opt_json(const std::optional<double>& v) {
  if (!v.has_value()) return nullptr;
  return *v;
}

LabelSchema load_schema(const std::string& schema_path, const std::string& unknown) {
  const UnknownLabelPolicy policy =
      unknown == "other" ? UnknownLabelPolicy::MapToOther : UnknownLabelPolicy::Reject;
  if (schema_path.empty()) {
    LabelSchema schema = LabelSchema::canonical();
    schema.set_policy(policy);
    return schema;
  }
  return LabelSchema::load(schema_path, policy);
}

std::string violation_line(const Violation& v) {
  std::string out = v.conv_id;
  if (v.utterance_index >= 0) out += "[" + std::to_string(v.utterance_index) + "]";
  out += ": " + v.rule + ": " + v.message;
  return out;
}

// Parses and enforces the labelling rules; violations are a data failure.
Corpus load_corpus_checked(const std::string& file, const std::string& schema_path,
                           const std::string& unknown) {
  Corpus corpus = parse_corpus(file, load_schema(schema_path, unknown));
  std::vector<Violation> violations = validate_corpus(corpus);
  if (!violations.empty()) {
    std::string msg = file + ": " + std::to_string(violations.size()) + " violation(s)";
    const std::size_t shown = std::min<std::size_t>(violations.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + violation_line(violations[i]);
    if (violations.size() > shown)
      msg += "\n  ... and " + std::to_string(violations.size() - shown) + " more";
    throw Error(msg);
  }
  return corpus;
}

void write_manifest(const fs::path& manifest_path, const std::string& command,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const ordered_json& config) {
  ordered_json m;
  m["toolkit_version"] = kVersion;
  m["command"] = command;
  m["seed"] = seed;
  ordered_json ins = ordered_json::array();
  for (const std::string& path : inputs) {
    ins.push_back(ordered_json{{"path", path}, {"checksum", file_checksum(path)}});
  }
  m["inputs"] = ins;
  m["outputs"] = outputs;
  m["config"] = config;
  m["created_utc"] = utc_timestamp();
  write_file(manifest_path, m.dump(2) + "\n");
}

// Data outputs stay byte-identical across reruns; the timestamp lives only
// in the sibling manifest.
void emit(const std::string& out_path, const std::string& content,
          const std::string& command, std::uint64_t seed,
          const std::vector<std::string>& inputs, const ordered_json& config) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  write_file(out_path, content);
  write_manifest(out_path + ".manifest.json", command, seed, inputs, {out_path}, config);
}

std::optional<std::vector<double>> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) return std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  if (out.empty()) return std::nullopt;
  return out;
}

std::optional<std::vector<int>> parse_int_list(const std::string& text) {
  auto values = parse_double_list(text);
  if (!values.has_value()) return std::nullopt;
  std::vector<int> out;
  for (double v : *values) {
    if (v < 1 || v != static_cast<double>(static_cast<int>(v))) return std::nullopt;
    out.push_back(static_cast<int>(v));
  }
  return out;
}

LevelAggregate parse_aggregate(const std::string& name) {
  if (name == "max") return LevelAggregate::Max;
  if (name == "median") return LevelAggregate::Median;
  if (name == "min") return LevelAggregate::Min;
  throw Error("unknown level aggregate '" + name + "'");
}

ordered_json stats_json(const CorpusStats& s) {
  ordered_json j;
  j["kind"] = "stats";
  j["n_conversations"] = s.n_conversations;
  j["n_utterances"] = s.n_utterances;
  j["n_speakers"] = s.n_speakers;
  j["mean_conversation_speakers"] = s.mean_conversation_speakers;
  j["length_median"] = s.length_median;
  j["length_min"] = s.length_min;
  j["length_max"] = s.length_max;
  j["mean_utterance_tokens"] = s.mean_utterance_tokens;
  ordered_json counts = ordered_json::array();
  for (int i = 0; i < kNumTactics; ++i) {
    counts.push_back(ordered_json{{"label", tactic_name(static_cast<Tactic>(i))},
                                  {"count", s.label_counts[i]}});
  }
  j["label_counts"] = counts;
  j["multilabel_fraction"] = s.multilabel_fraction;
  return j;
}

ordered_json analysis_json(const Corpus& corpus, const std::string& which,
                           MeanMode mode, long resamples, std::uint64_t seed,
                           int threads) {
  ordered_json j;
  j["kind"] = "analysis";
  j["mode"] = mode == MeanMode::Micro ? "micro" : "macro";
  const bool all = which == "all";
  if (all || which == "rebuttal-mean") {
    ordered_json section;
    ordered_json convs = ordered_json::array();
    for (const ConversationScore& s : conversation_scores(corpus)) {
      convs.push_back(ordered_json{{"conv_id", s.conv_id},
                                   {"micro_mean", opt_json(s.micro_mean)},
                                   {"macro_mean", opt_json(s.macro_mean)},
                                   {"escalated", s.escalated.has_value()
                                                     ? ordered_json(*s.escalated)
                                                     : ordered_json(nullptr)}});
    }
    section["conversations"] = convs;
    try {
      const TestResult r = escalation_correlation(corpus, mode, resamples, seed, threads);
      section["correlation"] = ordered_json{{"rho", r.statistic},
                                            {"p_value", r.p_value},
                                            {"n_resamples", r.n_resamples},
                                            {"seed", r.seed}};
    } catch (const Error&) {
      section["correlation"] = nullptr;  // too few scored conversations
    }
    j["rebuttal_mean"] = section;
  }
  if (all || which == "pmi") {
    ordered_json rows = ordered_json::array();
    for (const PmiEntry& e : attack_pmi_table(corpus)) {
      rows.push_back(ordered_json{{"label", tactic_name(e.label)},
                                  {"count_label", e.count_label},
                                  {"count_joint", e.count_joint},
                                  {"pmi", opt_json(e.pmi)}});
    }
    j["pmi"] = rows;
  }
  if (all || which == "attacks") {
    const AttackReport r = attack_report(corpus);
    j["attacks"] = ordered_json{
        {"n_attacks", r.n_attacks},
        {"n_conversations_with_attack", r.n_conversations_with_attack},
        {"share_in_escalated", opt_json(r.share_in_escalated)},
        {"recovery_rate_overall", opt_json(r.recovery_rate_overall)},
        {"recovery_rate_escalated", opt_json(r.recovery_rate_escalated)},
        {"recovery_rate_resolved", opt_json(r.recovery_rate_resolved)},
        {"recovery_rate_first_anchor", opt_json(r.recovery_rate_first_anchor)},
        {"immediate_retaliation_rate", opt_json(r.immediate_retaliation_rate)},
        {"reoffend_prob", opt_json(r.reoffend_prob)},
        {"other_user_attack_prob", opt_json(r.other_user_attack_prob)}};
  }
  if (all || which == "users") {
    const auto profiles = user_profiles(corpus);
    ordered_json rows = ordered_json::array();
    long with_rebuttal = 0;
    for (const auto& [user, p] : profiles) {
      if (p.n_rebuttal_utterances > 0) ++with_rebuttal;
      rows.push_back(ordered_json{{"user", user},
                                  {"mean", p.mean},
                                  {"min", p.min},
                                  {"max", p.max},
                                  {"range", p.range},
                                  {"n_utterances", p.n_utterances},
                                  {"n_rebuttal_utterances", p.n_rebuttal_utterances}});
    }
    ordered_json section;
    section["n_users"] = static_cast<long>(profiles.size());
    section["n_users_with_rebuttal"] = with_rebuttal;
    section["median_range"] = opt_json(median_range(profiles));
    section["n_min_level_at_least_4"] = count_min_level_at_least(profiles, 4);
    section["profiles"] = rows;
    j["users"] = section;
  }
  if (all || which == "mirroring") {
    const MirroringResult r = mirroring(corpus, mode);
    long defined = 0;
    ordered_json rows = ordered_json::array();
    for (const MirrorScore& s : r.scores) {
      if (s.defined) ++defined;
      rows.push_back(ordered_json{{"user", s.user_id},
                                  {"conv_id", s.conv_id},
                                  {"m", s.defined ? ordered_json(s.m) : ordered_json(nullptr)},
                                  {"defined", s.defined}});
    }
    ordered_json section;
    section["n_scores"] = static_cast<long>(r.scores.size());
    section["n_defined"] = defined;
    section["positive_fraction"] = opt_json(r.positive_fraction);
    section["scores"] = rows;
    j["mirroring"] = section;
  }
  return j;
}

ordered_json metrics_json(const EvalReport& report) {
  ordered_json j;
  j["kind"] = "tactics";
  j["n_samples"] = report.n_samples;
  j["jaccard"] = report.jaccard;
  j["hamming"] = report.hamming;
  j["emr"] = report.emr;
  j["at_least_one"] = report.at_least_one;
  ordered_json counts = ordered_json::array();
  for (int i = 0; i < kNumTactics; ++i) {
    counts.push_back(ordered_json{{"label", tactic_name(static_cast<Tactic>(i))},
                                  {"gold", report.gold_label_counts[i]},
                                  {"pred", report.pred_label_counts[i]},
                                  {"correct", report.correct_label_counts[i]}});
  }
  j["per_label_counts"] = counts;
  j["per_sample_jaccard"] = report.per_sample_jaccard;
  return j;
}

ordered_json escalation_metrics_json(const EscalationEval& eval) {
  ordered_json j;
  j["kind"] = "escalation";
  j["n"] = eval.n;
  j["pr_auc"] = eval.pr_auc;
  ordered_json rows = ordered_json::array();
  for (const auto& [conv_id, p] : eval.scores) {
    rows.push_back(ordered_json{{"conv_id", conv_id}, {"probability", p}});
  }
  j["scores"] = rows;
  return j;
}

// ---- subcommand argument bundles ----

struct CorpusArgs {
  std::string file;
  std::string schema;
  std::string unknown = "reject";
};

void add_corpus_options(CLI::App* sub, CorpusArgs& args, const char* file_help) {
  sub->add_option("file", args.file, file_help)->required();
  sub->add_option("--schema", args.schema, "Label schema JSON mapping raw strings");
  sub->add_option("--unknown", args.unknown, "Unknown-label policy")
      ->check(CLI::IsMember({"reject", "other"}));
}

struct TrainArgs {
  std::string task;
  std::string data;
  std::string dev;
  std::string schema;
  std::string unknown = "reject";
  std::string out;
  std::string config_path;
  std::string mode = "br";
  std::string context = "off";
  std::string multitask = "off";
  std::string calibrate = "on";
  std::string level_aggregate = "max";
  std::string hidden_dims = "256,128";
  double aux_weight = 1.0;
  double learning_rate = 1e-3;
  double dropout = 0.5;
  int catalog_k = 20;
  int attention_dim = 64;
  int head_hidden = 64;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 5;
  long vocab_min_freq = 2;
  long vocab_max_size = 10000;
  std::uint64_t seed = 0;
};

// Config file values sit under command-line flags; flags win.
ordered_json resolve_train_config(const TrainArgs& args, const CLI::App* sub) {
  ordered_json resolved;
  resolved["mode"] = args.mode;
  resolved["context"] = false;
  resolved["multitask"] = false;
  resolved["calibrate"] = true;
  resolved["level_aggregate"] = args.level_aggregate;
  resolved["hidden_dims"] = ordered_json::array({256, 128});
  resolved["aux_weight"] = args.aux_weight;
  resolved["learning_rate"] = args.learning_rate;
  resolved["dropout"] = args.dropout;
  resolved["catalog_k"] = args.catalog_k;
  resolved["attention_dim"] = args.attention_dim;
  resolved["head_hidden"] = args.head_hidden;
  resolved["batch_size"] = args.batch_size;
  resolved["max_epochs"] = args.max_epochs;
  resolved["patience"] = args.patience;
  resolved["vocab_min_freq"] = args.vocab_min_freq;
  resolved["vocab_max_size"] = args.vocab_max_size;
  resolved["seed"] = args.seed;

  if (!args.config_path.empty()) {
    ordered_json cfg;
    try {
      cfg = ordered_json::parse(read_file(args.config_path));
    } catch (const json::exception& e) {
      throw Error(args.config_path + ": not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw Error(args.config_path + ": config must be an object");
    for (const auto& [key, value] : cfg.items()) {
      if (!resolved.contains(key))
        throw Error(args.config_path + ": unknown config key '" + key + "'");
      const bool both_numbers = resolved[key].is_number() && value.is_number();
      if (!both_numbers && resolved[key].type() != value.type())
        throw Error(args.config_path + ": config key '" + key + "' has the wrong type");
      resolved[key] = value;
    }
  }

  auto given = [&](const std::string& flag) { return sub->count(flag) > 0; };
  if (given("--mode")) resolved["mode"] = args.mode;
  if (given("--context")) resolved["context"] = args.context == "on";
  if (given("--multitask")) resolved["multitask"] = args.multitask == "on";
  if (given("--calibrate")) resolved["calibrate"] = args.calibrate == "on";
  if (given("--level-aggregate")) resolved["level_aggregate"] = args.level_aggregate;
  if (given("--hidden-dims")) {
    auto dims = parse_int_list(args.hidden_dims);
    if (!dims.has_value())
      throw UsageError{"--hidden-dims expects comma-separated positive integers"};
    resolved["hidden_dims"] = *dims;
  }
  if (given("--aux-weight")) resolved["aux_weight"] = args.aux_weight;
  if (given("--learning-rate")) resolved["learning_rate"] = args.learning_rate;
  if (given("--dropout")) resolved["dropout"] = args.dropout;
  if (given("--catalog-k")) resolved["catalog_k"] = args.catalog_k;
  if (given("--attention-dim")) resolved["attention_dim"] = args.attention_dim;
  if (given("--head-hidden")) resolved["head_hidden"] = args.head_hidden;
  if (given("--batch-size")) resolved["batch_size"] = args.batch_size;
  if (given("--max-epochs")) resolved["max_epochs"] = args.max_epochs;
  if (given("--patience")) resolved["patience"] = args.patience;
  if (given("--vocab-min-freq")) resolved["vocab_min_freq"] = args.vocab_min_freq;
  if (given("--vocab-max-size")) resolved["vocab_max_size"] = args.vocab_max_size;
  if (given("--seed")) resolved["seed"] = args.seed;
  return resolved;
}

TrainConfig train_config_from(const ordered_json& resolved) {
  TrainConfig config;
  config.learning_rate = resolved.at("learning_rate").get<double>();
  config.dropout_p = resolved.at("dropout").get<double>();
  config.batch_size = resolved.at("batch_size").get<int>();
  config.max_epochs = resolved.at("max_epochs").get<int>();
  config.patience = resolved.at("patience").get<int>();
  config.seed = resolved.at("seed").get<std::uint64_t>();
  return config;
}

int cmd_train(const TrainArgs& args, const CLI::App* sub, const std::string& command) {
  const ordered_json resolved = resolve_train_config(args, sub);
  const Corpus train = load_corpus_checked(args.data, args.schema, args.unknown);
  const Corpus dev = load_corpus_checked(args.dev, args.schema, args.unknown);
  const std::uint64_t seed = resolved.at("seed").get<std::uint64_t>();

  if (args.task == "tactics") {
    TacticTrainOptions options;
    options.config = train_config_from(resolved);
    options.hidden_dims = resolved.at("hidden_dims").get<std::vector<int>>();
    options.mode = resolved.at("mode").get<std::string>() == "lp"
                       ? TaskMode::LabelPowerset
                       : TaskMode::BinaryRelevance;
    options.context = resolved.at("context").get<bool>();
    options.multitask = resolved.at("multitask").get<bool>();
    options.aux_weight = resolved.at("aux_weight").get<double>();
    options.catalog_k = resolved.at("catalog_k").get<int>();
    options.level_aggregate =
        parse_aggregate(resolved.at("level_aggregate").get<std::string>());
    options.vocab_min_freq = resolved.at("vocab_min_freq").get<long>();
    options.vocab_max_size = resolved.at("vocab_max_size").get<long>();
    options.calibrate = resolved.at("calibrate").get<bool>();
    const TacticModel model = train_tactics(train, dev, options);
    save_tactic_model(model, args.out);
    std::cout << "task=tactics mode=" << resolved.at("mode").get<std::string>()
              << " context=" << (options.context ? "on" : "off")
              << " multitask=" << (options.multitask ? "on" : "off") << "\n"
              << "best_epoch=" << model.history.best_epoch
              << " best_dev_loss=" << fmt4(model.history.best_dev_loss) << "\n"
              << "wrote: " << args.out << "\n";
  } else {
    EscalationTrainOptions options;
    options.config = train_config_from(resolved);
    options.hidden_dims = resolved.at("hidden_dims").get<std::vector<int>>();
    options.head_hidden = resolved.at("head_hidden").get<int>();
    options.attention_dim = resolved.at("attention_dim").get<int>();
    options.aux_weight = resolved.at("aux_weight").get<double>();
    options.vocab_min_freq = resolved.at("vocab_min_freq").get<long>();
    options.vocab_max_size = resolved.at("vocab_max_size").get<long>();
    const EscalationModel model = train_escalation(train, dev, options);
    save_escalation_model(model, args.out);
    std::cout << "task=escalation aux_weight="
              << fmt4(resolved.at("aux_weight").get<double>()) << "\n"
              << "best_epoch=" << model.history.best_epoch
              << " best_dev_loss=" << fmt4(model.history.best_dev_loss) << "\n"
              << "wrote: " << args.out << "\n";
  }
  ordered_json manifest_config = resolved;
  manifest_config["task"] = args.task;
  write_manifest(args.out + ".manifest.json", command, seed, {args.data, args.dev},
                 {args.out}, manifest_config);
  return 0;
}

}  // namespace

std::string render_report(const std::string& report_json) {
  ordered_json j;
  try {
    j = ordered_json::parse(report_json);
  } catch (const json::exception& e) {
    throw Error(std::string("report: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("report: expected a JSON object");
  std::ostringstream out;
  auto cell = [](const ordered_json& v) -> std::string {
    if (v.is_null()) return "n/a";
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return fmt4(v.get<double>());
    return v.get<std::string>();
  };
  const std::string kind = j.value("kind", "");

  if (kind == "stats") {
    out << "| measure | value |\n| --- | --- |\n";
    for (const char* key : {"n_conversations", "n_utterances", "n_speakers",
                            "mean_conversation_speakers", "length_median", "length_min",
                            "length_max", "mean_utterance_tokens",
                            "multilabel_fraction"}) {
      if (j.contains(key)) out << "| " << key << " | " << cell(j.at(key)) << " |\n";
    }
    out << "\n| label | count |\n| --- | --- |\n";
    for (const ordered_json& row : j.value("label_counts", ordered_json::array())) {
      out << "| " << row.at("label").get<std::string>() << " | " << cell(row.at("count"))
          << " |\n";
    }
    return out.str();
  }

  if (kind == "analysis") {
    if (j.contains("rebuttal_mean")) {
      const ordered_json& section = j.at("rebuttal_mean");
      out << "## Rebuttal level vs escalation\n\n"
          << "| conversation | micro mean | macro mean | escalated |\n"
          << "| --- | --- | --- | --- |\n";
      for (const ordered_json& row : section.value("conversations", ordered_json::array())) {
        out << "| " << row.at("conv_id").get<std::string>() << " | "
            << cell(row.at("micro_mean")) << " | " << cell(row.at("macro_mean")) << " | "
            << cell(row.at("escalated")) << " |\n";
      }
      if (section.contains("correlation") && !section.at("correlation").is_null()) {
        const ordered_json& c = section.at("correlation");
        out << "\nSpearman rho = " << cell(c.at("rho")) << ", p = " << cell(c.at("p_value"))
            << " (" << c.at("n_resamples").get<long>() << " resamples, seed "
            << c.at("seed").get<std::uint64_t>() << ")\n";
      }
      out << "\n";
    }
    if (j.contains("pmi")) {
      out << "## PMI with personal attacks\n\n"
          << "| label | utterances | with attack | pmi |\n| --- | --- | --- | --- |\n";
      std::vector<ordered_json> rows(j.at("pmi").begin(), j.at("pmi").end());
      std::stable_sort(rows.begin(), rows.end(), [](const ordered_json& a, const ordered_json& b) {
        const bool da = !a.at("pmi").is_null(), db = !b.at("pmi").is_null();
        if (da != db) return da;  // undefined rows sink to the bottom
        if (!da) return false;
        return a.at("pmi").get<double>() > b.at("pmi").get<double>();
      });
      for (const ordered_json& row : rows) {
        out << "| " << row.at("label").get<std::string>() << " | "
            << cell(row.at("count_label")) << " | " << cell(row.at("count_joint"))
            << " | " << cell(row.at("pmi")) << " |\n";
      }
      out << "\n";
    }
    if (j.contains("attacks")) {
      out << "## Personal attacks\n\n| measure | value |\n| --- | --- |\n";
      for (const auto& [key, value] : j.at("attacks").items()) {
        out << "| " << key << " | " << cell(value) << " |\n";
      }
      out << "\n";
    }
    if (j.contains("users")) {
      const ordered_json& section = j.at("users");
      out << "## User rebuttal profiles\n\n| measure | value |\n| --- | --- |\n";
      for (const char* key :
           {"n_users", "n_users_with_rebuttal", "median_range", "n_min_level_at_least_4"}) {
        if (section.contains(key))
          out << "| " << key << " | " << cell(section.at(key)) << " |\n";
      }
      out << "\n";
    }
    if (j.contains("mirroring")) {
      const ordered_json& section = j.at("mirroring");
      out << "## Mirroring\n\n| measure | value |\n| --- | --- |\n";
      for (const char* key : {"n_scores", "n_defined", "positive_fraction"}) {
        if (section.contains(key))
          out << "| " << key << " | " << cell(section.at(key)) << " |\n";
      }
      out << "\n";
    }
    return out.str();
  }

  if (kind == "tactics") {
    out << "| metric | value |\n| --- | --- |\n";
    for (const char* key : {"n_samples", "jaccard", "hamming", "emr", "at_least_one"}) {
      if (j.contains(key)) out << "| " << key << " | " << cell(j.at(key)) << " |\n";
    }
    out << "\n| label | gold | pred | correct |\n| --- | --- | --- | --- |\n";
    for (const ordered_json& row : j.value("per_label_counts", ordered_json::array())) {
      out << "| " << row.at("label").get<std::string>() << " | " << cell(row.at("gold"))
          << " | " << cell(row.at("pred")) << " | " << cell(row.at("correct")) << " |\n";
    }
    return out.str();
  }

  if (kind == "escalation") {
    out << "| metric | value |\n| --- | --- |\n";
    out << "| n | " << cell(j.at("n")) << " |\n";
    out << "| pr_auc | " << cell(j.at("pr_auc")) << " |\n";
    out << "\n| conversation | probability |\n| --- | --- |\n";
    for (const ordered_json& row : j.value("scores", ordered_json::array())) {
      out << "| " << row.at("conv_id").get<std::string>() << " | "
          << cell(row.at("probability")) << " |\n";
    }
    return out.str();
  }

  if (kind == "comparison") {
    out << "| measure | value |\n| --- | --- |\n";
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") continue;
      out << "| " << key << " | " << cell(value) << " |\n";
    }
    return out.str();
  }

  // Unknown or empty reports still render a (possibly empty) table.
  out << "| field | value |\n| --- | --- |\n";
  for (const auto& [key, value] : j.items()) {
    if (value.is_object() || value.is_array()) continue;
    out << "| " << key << " | " << cell(value) << " |\n";
  }
  return out.str();
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Dispute tactics toolkit: corpus checks, analyses, and models"};
  app.require_subcommand(1);
  std::uint64_t default_seed = 0;
  try {
    default_seed = env_seed_default();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CorpusArgs validate_args;
  CLI::App* sub_validate =
      app.add_subcommand("validate", "Check a corpus file against the labelling rules");
  add_corpus_options(sub_validate, validate_args, "Corpus JSONL file");

  CorpusArgs stats_args;
  std::string stats_out;
  CLI::App* sub_stats = app.add_subcommand("stats", "Print corpus statistics as JSON");
  add_corpus_options(sub_stats, stats_args, "Corpus JSONL file");
  sub_stats->add_option("--out", stats_out, "Write JSON here instead of standard output");

  CorpusArgs split_args;
  std::string split_ratios = "0.7,0.2,0.1";
  std::string split_out_dir;
  std::uint64_t split_seed = default_seed;
  CLI::App* sub_split =
      app.add_subcommand("split", "Seeded conversation-level train/dev/test split");
  add_corpus_options(sub_split, split_args, "Corpus JSONL file");
  sub_split->add_option("--ratios", split_ratios, "Three comma-separated fractions");
  sub_split->add_option("--seed", split_seed, "Shuffle seed");
  sub_split->add_option("--out-dir", split_out_dir, "Output directory")->required();

  CorpusArgs analyze_args;
  std::string analyze_which = "all";
  std::string analyze_mode = "micro";
  std::string analyze_out;
  long analyze_resamples = 10000;
  std::uint64_t analyze_seed = default_seed;
  int analyze_threads = 1;
  CLI::App* sub_analyze =
      app.add_subcommand("analyze", "Corpus-level dispute analyses as a JSON report");
  add_corpus_options(sub_analyze, analyze_args, "Corpus JSONL file");
  sub_analyze->add_option("--which", analyze_which, "Which analysis to run")
      ->check(CLI::IsMember({"all", "rebuttal-mean", "pmi", "attacks", "users",
                             "mirroring"}));
  sub_analyze->add_option("--mode", analyze_mode, "Mean definition")
      ->check(CLI::IsMember({"micro", "macro"}));
  sub_analyze->add_option("--out", analyze_out, "Write the report JSON here");
  sub_analyze->add_option("--resamples", analyze_resamples, "Permutation resamples")
      ->check(CLI::PositiveNumber);
  sub_analyze->add_option("--seed", analyze_seed, "Permutation seed");
  sub_analyze->add_option("--threads", analyze_threads, "Worker threads")
      ->check(CLI::PositiveNumber);

  TrainArgs train_args;
  train_args.seed = default_seed;
  CLI::App* sub_train = app.add_subcommand("train", "Train a tactic or escalation model");
  sub_train->add_option("--task", train_args.task, "What to train")
      ->required()
      ->check(CLI::IsMember({"tactics", "escalation"}));
  sub_train->add_option("--data", train_args.data, "Training corpus JSONL")->required();
  sub_train->add_option("--dev", train_args.dev, "Development corpus JSONL")->required();
  sub_train->add_option("--schema", train_args.schema, "Label schema JSON");
  sub_train->add_option("--unknown", train_args.unknown, "Unknown-label policy")
      ->check(CLI::IsMember({"reject", "other"}));
  sub_train->add_option("--out", train_args.out, "Checkpoint path")->required();
  sub_train->add_option("--config", train_args.config_path,
                        "JSON config merged under flags (flags win)");
  sub_train->add_option("--mode", train_args.mode, "Multilabel method")
      ->check(CLI::IsMember({"br", "lp"}));
  sub_train->add_option("--context", train_args.context, "Prepend context features")
      ->check(CLI::IsMember({"on", "off"}));
  sub_train->add_option("--multitask", train_args.multitask, "Ordinality auxiliary task")
      ->check(CLI::IsMember({"on", "off"}));
  sub_train->add_option("--calibrate", train_args.calibrate,
                        "Dev-set threshold calibration (br only)")
      ->check(CLI::IsMember({"on", "off"}));
  sub_train->add_option("--level-aggregate", train_args.level_aggregate,
                        "Reference-level aggregate for ordinality")
      ->check(CLI::IsMember({"max", "median", "min"}));
  sub_train->add_option("--hidden-dims", train_args.hidden_dims,
                        "Encoder widths, comma-separated");
  sub_train->add_option("--aux-weight", train_args.aux_weight, "Auxiliary loss weight");
  sub_train->add_option("--learning-rate", train_args.learning_rate, "Adam step size");
  sub_train->add_option("--dropout", train_args.dropout, "Dropout probability");
  sub_train->add_option("--catalog-k", train_args.catalog_k, "Labelset catalog size");
  sub_train->add_option("--attention-dim", train_args.attention_dim,
                        "Attention projection width (escalation)");
  sub_train->add_option("--head-hidden", train_args.head_hidden,
                        "Escalation head hidden width");
  sub_train->add_option("--batch-size", train_args.batch_size, "Minibatch size");
  sub_train->add_option("--max-epochs", train_args.max_epochs, "Epoch cap");
  sub_train->add_option("--patience", train_args.patience, "Early-stopping patience");
  sub_train->add_option("--vocab-min-freq", train_args.vocab_min_freq,
                        "Minimum token frequency");
  sub_train->add_option("--vocab-max-size", train_args.vocab_max_size,
                        "Maximum vocabulary size");
  sub_train->add_option("--seed", train_args.seed, "Training seed");

  std::string eval_model, eval_data, eval_schema, eval_unknown = "reject", eval_out;
  CLI::App* sub_eval =
      app.add_subcommand("evaluate", "Score a trained model on a corpus");
  sub_eval->add_option("--model", eval_model, "Checkpoint path")->required();
  sub_eval->add_option("--data", eval_data, "Corpus JSONL file")->required();
  sub_eval->add_option("--schema", eval_schema, "Label schema JSON");
  sub_eval->add_option("--unknown", eval_unknown, "Unknown-label policy")
      ->check(CLI::IsMember({"reject", "other"}));
  sub_eval->add_option("--out", eval_out, "Write metrics JSON here");

  std::string pred_model, pred_data, pred_schema, pred_unknown = "reject", pred_out;
  CLI::App* sub_predict =
      app.add_subcommand("predict", "Write model predictions as JSONL");
  sub_predict->add_option("--model", pred_model, "Checkpoint path")->required();
  sub_predict->add_option("--data", pred_data, "Corpus JSONL file")->required();
  sub_predict->add_option("--schema", pred_schema, "Label schema JSON");
  sub_predict->add_option("--unknown", pred_unknown, "Unknown-label policy")
      ->check(CLI::IsMember({"reject", "other"}));
  sub_predict->add_option("--out", pred_out, "Predictions JSONL path");

  std::vector<std::string> compare_metrics;
  bool compare_per_sample = false;
  long compare_resamples = 10000;
  std::uint64_t compare_seed = default_seed;
  int compare_threads = 1;
  std::string compare_out;
  CLI::App* sub_compare = app.add_subcommand(
      "compare", "Paired permutation test between two metrics files");
  sub_compare->add_option("--metrics", compare_metrics, "Two metrics JSON files")
      ->expected(2)
      ->required();
  sub_compare->add_flag("--per-sample", compare_per_sample,
                        "Pair per-sample Jaccard scores (default behavior)");
  sub_compare->add_option("--resamples", compare_resamples, "Permutation resamples")
      ->check(CLI::PositiveNumber);
  sub_compare->add_option("--seed", compare_seed, "Permutation seed");
  sub_compare->add_option("--threads", compare_threads, "Worker threads")
      ->check(CLI::PositiveNumber);
  sub_compare->add_option("--out", compare_out, "Write the comparison JSON here");

  std::string report_file, report_out;
  CLI::App* sub_report =
      app.add_subcommand("report", "Render a report JSON as markdown tables");
  sub_report->add_option("file", report_file, "Report JSON file")->required();
  sub_report->add_option("--out", report_out, "Write markdown here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = join_command(args);
  try {
    if (sub_validate->parsed()) {
      const Corpus corpus =
          parse_corpus(validate_args.file, load_schema(validate_args.schema,
                                                       validate_args.unknown));
      const std::vector<Violation> violations = validate_corpus(corpus);
      if (!violations.empty()) {
        for (const Violation& v : violations) std::cout << violation_line(v) << "\n";
        std::cerr << "error: " << validate_args.file << ": "
                  << violations.size() << " violation(s)\n";
        return 1;
      }
      const CorpusStats s = corpus_stats(corpus);
      std::cout << "OK: " << s.n_conversations << " conversations, " << s.n_utterances
                << " utterances\n";
      return 0;
    }
    if (sub_stats->parsed()) {
      const Corpus corpus =
          load_corpus_checked(stats_args.file, stats_args.schema, stats_args.unknown);
      const ordered_json j = stats_json(corpus_stats(corpus));
      emit(stats_out, j.dump(2) + "\n", command, 0, {stats_args.file},
           ordered_json{{"schema", stats_args.schema}, {"unknown", stats_args.unknown}});
      return 0;
    }
    if (sub_split->parsed()) {
      auto parsed = parse_double_list(split_ratios);
      if (!parsed.has_value() || parsed->size() != 3)
        throw UsageError{"--ratios expects three comma-separated fractions"};
      std::array<double, 3> ratios{(*parsed)[0], (*parsed)[1], (*parsed)[2]};
      const Corpus corpus =
          load_corpus_checked(split_args.file, split_args.schema, split_args.unknown);
      const std::array<Corpus, 3> parts = split_corpus(corpus, ratios, split_seed);
      fs::create_directories(split_out_dir);
      const std::array<const char*, 3> names = {"train.jsonl", "dev.jsonl", "test.jsonl"};
      std::vector<std::string> outputs;
      for (int i = 0; i < 3; ++i) {
        const fs::path path = fs::path(split_out_dir) / names[i];
        write_corpus(parts[i], path);
        outputs.push_back(path.string());
        std::cout << names[i] << ": " << parts[i].conversations.size()
                  << " conversations\n";
      }
      write_manifest(fs::path(split_out_dir) / "manifest.json", command, split_seed,
                     {split_args.file}, outputs,
                     ordered_json{{"ratios", *parsed},
                                  {"schema", split_args.schema},
                                  {"unknown", split_args.unknown}});
      return 0;
    }
    if (sub_analyze->parsed()) {
      const Corpus corpus = load_corpus_checked(analyze_args.file, analyze_args.schema,
                                                analyze_args.unknown);
      const MeanMode mode =
          analyze_mode == "macro" ? MeanMode::Macro : MeanMode::Micro;
      const ordered_json j = analysis_json(corpus, analyze_which, mode,
                                           analyze_resamples, analyze_seed,
                                           analyze_threads);
      emit(analyze_out, j.dump(2) + "\n", command, analyze_seed, {analyze_args.file},
           ordered_json{{"which", analyze_which},
                        {"mode", analyze_mode},
                        {"resamples", analyze_resamples},
                        {"threads", analyze_threads},
                        {"schema", analyze_args.schema},
                        {"unknown", analyze_args.unknown}});
      return 0;
    }
    if (sub_train->parsed()) return cmd_train(train_args, sub_train, command);
    if (sub_eval->parsed()) {
      const Corpus corpus = load_corpus_checked(eval_data, eval_schema, eval_unknown);
      const std::string kind = checkpoint_kind(eval_model);
      ordered_json j;
      if (kind == "tactics") {
        j = metrics_json(evaluate_tactics(load_tactic_model(eval_model), corpus));
      } else if (kind == "escalation") {
        j = escalation_metrics_json(
            evaluate_escalation(load_escalation_model(eval_model), corpus));
      } else {
        throw Error(eval_model + ": unknown checkpoint kind '" + kind + "'");
      }
      emit(eval_out, j.dump(2) + "\n", command, 0, {eval_model, eval_data},
           ordered_json{{"model", eval_model},
                        {"schema", eval_schema},
                        {"unknown", eval_unknown}});
      return 0;
    }
    if (sub_predict->parsed()) {
      const Corpus corpus = load_corpus_checked(pred_data, pred_schema, pred_unknown);
      const std::string kind = checkpoint_kind(pred_model);
      std::string lines;
      if (kind == "tactics") {
        const TacticModel model = load_tactic_model(pred_model);
        for (const Conversation& conv : corpus.conversations) {
          ordered_json row;
          row["conv_id"] = conv.conv_id;
          ordered_json tactics = ordered_json::array();
          for (const LabelVector& v : predict_tactics(model, conv)) {
            tactics.push_back(v.to_names());
          }
          row["tactics"] = tactics;
          lines += row.dump() + "\n";
        }
      } else if (kind == "escalation") {
        const EscalationModel model = load_escalation_model(pred_model);
        for (const Conversation& conv : corpus.conversations) {
          ordered_json row;
          row["conv_id"] = conv.conv_id;
          row["escalation_probability"] = predict_escalation(model, conv);
          lines += row.dump() + "\n";
        }
      } else {
        throw Error(pred_model + ": unknown checkpoint kind '" + kind + "'");
      }
      emit(pred_out, lines, command, 0, {pred_model, pred_data},
           ordered_json{{"model", pred_model},
                        {"schema", pred_schema},
                        {"unknown", pred_unknown}});
      return 0;
    }
    if (sub_compare->parsed()) {
      json a, b;
      try {
        a = json::parse(read_file(compare_metrics[0]));
        b = json::parse(read_file(compare_metrics[1]));
      } catch (const json::exception& e) {
        throw Error(std::string("compare: metrics file is not valid JSON: ") + e.what());
      }
      for (const json* m : {&a, &b}) {
        if (!m->contains("per_sample_jaccard"))
          throw Error("compare: metrics file lacks per_sample_jaccard "
                      "(evaluate a tactics model to produce it)");
      }
      const auto sa = a.at("per_sample_jaccard").get<std::vector<double>>();
      const auto sb = b.at("per_sample_jaccard").get<std::vector<double>>();
      if (sa.size() != sb.size())
        throw Error("compare: per-sample score lists differ in length (" +
                    std::to_string(sa.size()) + " vs " + std::to_string(sb.size()) +
                    "); evaluate both models on the same corpus");
      (void)compare_per_sample;  // per-sample pairing is the only supported mode
      const TestResult r =
          paired_permutation_test(sa, sb, compare_resamples, compare_seed,
                                  compare_threads);
      double mean_a = 0.0, mean_b = 0.0;
      for (double v : sa) mean_a += v;
      for (double v : sb) mean_b += v;
      mean_a /= static_cast<double>(sa.size());
      mean_b /= static_cast<double>(sb.size());
      ordered_json j;
      j["kind"] = "comparison";
      j["metric"] = "jaccard";
      j["n"] = static_cast<long>(sa.size());
      j["mean_a"] = mean_a;
      j["mean_b"] = mean_b;
      j["mean_diff"] = r.statistic;
      j["p_value"] = r.p_value;
      j["n_resamples"] = r.n_resamples;
      j["seed"] = r.seed;
      emit(compare_out, j.dump(2) + "\n", command, compare_seed,
           {compare_metrics[0], compare_metrics[1]},
           ordered_json{{"resamples", compare_resamples},
                        {"threads", compare_threads}});
      return 0;
    }
    if (sub_report->parsed()) {
      const std::string markdown = render_report(read_file(report_file));
      emit(report_out, markdown, command, 0, {report_file}, ordered_json::object());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.message << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}

}  // namespace dispute
