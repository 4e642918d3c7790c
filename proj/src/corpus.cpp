#include "dispute/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "dispute/error.hpp"
#include "dispute/features.hpp"
#include "dispute/rng.hpp"
#include "dispute/util.hpp"
#include "dispute/version.hpp"

namespace dispute {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

LabelSchema LabelSchema::canonical() {
  LabelSchema schema;
  schema.version_ = kSchemaVersion;
  for (int i = 0; i < kNumTactics; ++i) {
    schema.aliases_.emplace(std::string(tactic_table()[i].name), static_cast<Tactic>(i));
  }
  return schema;
}

LabelSchema LabelSchema::load(const std::filesystem::path& path, UnknownLabelPolicy policy) {
  LabelSchema schema = canonical();
  schema.policy_ = policy;
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error("schema file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw Error("schema file must be a JSON object");
  const json* mapping = &doc;
  if (doc.contains("labels")) {
    if (doc.contains("version") && doc["version"].is_string())
      schema.version_ = doc["version"].get<std::string>();
    mapping = &doc["labels"];
    if (!mapping->is_object()) throw Error("schema \"labels\" must be a JSON object");
  }
  for (auto it = mapping->begin(); it != mapping->end(); ++it) {
    if (!it.value().is_string())
      throw Error("schema entry for \"" + it.key() + "\" must map to a label name");
    const std::string canonical_name = it.value().get<std::string>();
    auto tactic = find_tactic(canonical_name);
    if (!tactic)
      throw Error("schema maps \"" + it.key() + "\" to unknown canonical label \"" +
                  canonical_name + "\"");
    schema.aliases_[it.key()] = *tactic;
  }
  return schema;
}

std::optional<Tactic> LabelSchema::resolve(const std::string& raw) const {
  auto it = aliases_.find(raw);
  if (it != aliases_.end()) return it->second;
  if (policy_ == UnknownLabelPolicy::MapToOther) return Tactic::Other;
  return std::nullopt;
}

namespace {

Conversation parse_conversation(const json& doc, const LabelSchema& schema, long line) {
  if (!doc.is_object()) throw ParseError("conversation record must be a JSON object", line);
  Conversation conv;
  if (!doc.contains("conv_id") || !doc["conv_id"].is_string())
    throw ParseError("missing string field \"conv_id\"", line);
  conv.conv_id = doc["conv_id"].get<std::string>();
  if (doc.contains("title") && !doc["title"].is_null()) {
    if (!doc["title"].is_string()) throw ParseError("\"title\" must be a string or null", line);
    conv.title = doc["title"].get<std::string>();
  }
  if (doc.contains("escalated") && !doc["escalated"].is_null()) {
    if (!doc["escalated"].is_boolean())
      throw ParseError("\"escalated\" must be a boolean", line);
    conv.escalated = doc["escalated"].get<bool>();
  }
  if (!doc.contains("utterances") || !doc["utterances"].is_array())
    throw ParseError("missing array field \"utterances\"", line);
  int index = 0;
  for (const json& u : doc["utterances"]) {
    if (!u.is_object()) throw ParseError("utterance must be a JSON object", line);
    Utterance utt;
    utt.index = index++;
    if (!u.contains("speaker") || !u["speaker"].is_string())
      throw ParseError("utterance missing string field \"speaker\"", line);
    utt.speaker = u["speaker"].get<std::string>();
    if (!u.contains("text") || !u["text"].is_string())
      throw ParseError("utterance missing string field \"text\"", line);
    utt.text = u["text"].get<std::string>();
    if (u.contains("tactics")) {
      if (!u["tactics"].is_array()) throw ParseError("\"tactics\" must be an array", line);
      for (const json& raw : u["tactics"]) {
        if (!raw.is_string()) throw ParseError("tactic labels must be strings", line);
        const std::string name = raw.get<std::string>();
        auto tactic = schema.resolve(name);
        if (!tactic)
          throw ParseError("unknown label string \"" + name + "\" (not in schema)", line);
        utt.labels.set(*tactic);
      }
    }
    conv.utterances.push_back(std::move(utt));
  }
  return conv;
}

}  // namespace

Corpus parse_corpus_text(const std::string& text, const LabelSchema& schema) {
  Corpus corpus;
  corpus.label_schema_version = schema.version().empty() ? kSchemaVersion : schema.version();
  std::unordered_set<std::string> seen_ids;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    Conversation conv = parse_conversation(doc, schema, line_no);
    if (!seen_ids.insert(conv.conv_id).second)
      throw ParseError("duplicate conv_id \"" + conv.conv_id + "\"", line_no);
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

Corpus parse_corpus(const std::filesystem::path& path, const LabelSchema& schema) {
  return parse_corpus_text(read_file(path), schema);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const Conversation& conv : corpus.conversations) {
    ordered_json doc;
    doc["conv_id"] = conv.conv_id;
    doc["title"] = conv.title ? json(*conv.title) : json(nullptr);
    if (conv.escalated) doc["escalated"] = *conv.escalated;
    doc["utterances"] = ordered_json::array();
    for (const Utterance& utt : conv.utterances) {
      ordered_json u;
      u["speaker"] = utt.speaker;
      u["text"] = utt.text;
      u["tactics"] = utt.labels.to_names();
      doc["utterances"].push_back(std::move(u));
    }
    out += doc.dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, serialize_corpus(corpus));
}

std::vector<Violation> validate_conversation(const Conversation& conv) {
  std::vector<Violation> out;
  if (conv.utterances.empty()) {
    out.push_back({conv.conv_id, -1, "min-utterances", "conversation has no utterances"});
    return out;
  }
  std::set<std::string> speakers;
  for (const Utterance& utt : conv.utterances) {
    speakers.insert(utt.speaker);
    if (utt.labels.none()) {
      out.push_back({conv.conv_id, utt.index, "labels-non-empty",
                     "utterance has no tactic labels"});
    }
    if (utt.labels.rebuttal_count() > 3) {
      out.push_back({conv.conv_id, utt.index, "max-3-rebuttal-labels",
                     "utterance has " + std::to_string(utt.labels.rebuttal_count()) +
                         " rebuttal labels (limit 3)"});
    }
    if (utt.labels.coordination_count() > 2) {
      out.push_back({conv.conv_id, utt.index, "max-2-coordination-labels",
                     "utterance has " + std::to_string(utt.labels.coordination_count()) +
                         " coordination labels (limit 2)"});
    }
  }
  if (speakers.empty()) {
    out.push_back({conv.conv_id, -1, "min-speakers", "conversation has no speakers"});
  }
  return out;
}

std::vector<Violation> validate_corpus(const Corpus& corpus) {
  std::vector<Violation> out;
  for (const Conversation& conv : corpus.conversations) {
    auto v = validate_conversation(conv);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  if (corpus.conversations.empty()) throw Error("corpus_stats: empty corpus");
  CorpusStats stats;
  stats.n_conversations = static_cast<long>(corpus.conversations.size());
  std::set<std::string> all_speakers;
  std::vector<long> lengths;
  long total_tokens = 0;
  long multilabel = 0;
  long total_conv_speakers = 0;
  for (const Conversation& conv : corpus.conversations) {
    lengths.push_back(static_cast<long>(conv.utterances.size()));
    std::set<std::string> conv_speakers;
    for (const Utterance& utt : conv.utterances) {
      ++stats.n_utterances;
      all_speakers.insert(utt.speaker);
      conv_speakers.insert(utt.speaker);
      total_tokens += static_cast<long>(tokenize(utt.text).size());
      if (utt.labels.count() > 1) ++multilabel;
      for (int i = 0; i < kNumTactics; ++i) {
        if (utt.labels.test(i)) ++stats.label_counts[i];
      }
    }
    total_conv_speakers += static_cast<long>(conv_speakers.size());
  }
  stats.n_speakers = static_cast<long>(all_speakers.size());
  stats.mean_conversation_speakers =
      static_cast<double>(total_conv_speakers) / static_cast<double>(stats.n_conversations);
  std::sort(lengths.begin(), lengths.end());
  stats.length_min = lengths.front();
  stats.length_max = lengths.back();
  std::size_t n = lengths.size();
  stats.length_median = (n % 2 == 1)
                            ? static_cast<double>(lengths[n / 2])
                            : (lengths[n / 2 - 1] + lengths[n / 2]) / 2.0;
  if (stats.n_utterances > 0) {
    stats.mean_utterance_tokens =
        static_cast<double>(total_tokens) / static_cast<double>(stats.n_utterances);
    stats.multilabel_fraction =
        static_cast<double>(multilabel) / static_cast<double>(stats.n_utterances);
  }
  return stats;
}

std::array<Corpus, 3> split_corpus(const Corpus& corpus, const std::array<double, 3>& ratios,
                                   std::uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  for (double r : ratios) {
    if (r <= 0.0) throw Error("split_corpus: ratios must be positive");
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split_corpus: ratios must sum to 1");
  const std::size_t n = corpus.conversations.size();
  if (n < 3) throw Error("split_corpus: fewer conversations than parts");

  // Largest-remainder apportionment; ties go to the earlier part.
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = static_cast<double>(n) * ratios[i];
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t left = n - assigned, i = 0; left > 0; --left, ++i) {
    ++sizes[order[i % 3]];
  }

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, /*stream=*/0x5917));
  rng.shuffle(perm);

  std::array<Corpus, 3> parts;
  std::size_t cursor = 0;
  for (int p = 0; p < 3; ++p) {
    parts[p].label_schema_version = corpus.label_schema_version;
    std::vector<std::size_t> chosen(perm.begin() + cursor, perm.begin() + cursor + sizes[p]);
    cursor += sizes[p];
    // Keep the original corpus order within each part.
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t idx : chosen) parts[p].conversations.push_back(corpus.conversations[idx]);
  }
  return parts;
}

}  // namespace dispute
