#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dispute/taxonomy.hpp"

namespace dispute {

struct Utterance {
  int index = 0;  // position within the conversation, consecutive from 0
  std::string speaker;
  std::string text;
  LabelVector labels;

  bool operator==(const Utterance&) const = default;
};

struct Conversation {
  std::string conv_id;
  std::optional<std::string> title;
  std::optional<bool> escalated;
  std::vector<Utterance> utterances;

  bool operator==(const Conversation&) const = default;
};

struct Corpus {
  std::vector<Conversation> conversations;
  std::string label_schema_version;

  bool operator==(const Corpus&) const = default;
};

inline std::vector<Ordinality> ordinality_sequence(const Conversation& conv,
                                                   LevelAggregate agg = LevelAggregate::Max) {
  std::vector<LabelVector> labelsets;
  labelsets.reserve(conv.utterances.size());
  for (const auto& u : conv.utterances) labelsets.push_back(u.labels);
  return ordinality_sequence(std::span<const LabelVector>(labelsets), agg);
}

enum class UnknownLabelPolicy { Reject, MapToOther };

// Maps raw label spellings found in data files onto canonical tactics.
// Canonical names always resolve; a schema file overlays extra aliases.
class LabelSchema {
 public:
  static LabelSchema canonical();
  static LabelSchema load(const std::filesystem::path& path,
                          UnknownLabelPolicy policy = UnknownLabelPolicy::Reject);

  std::optional<Tactic> resolve(const std::string& raw) const;

  void add_alias(const std::string& raw, Tactic t) { aliases_[raw] = t; }
  UnknownLabelPolicy policy() const { return policy_; }
  void set_policy(UnknownLabelPolicy p) { policy_ = p; }
  const std::string& version() const { return version_; }

 private:
  std::unordered_map<std::string, Tactic> aliases_;
  UnknownLabelPolicy policy_ = UnknownLabelPolicy::Reject;
  std::string version_;
};

// Reads a JSON Lines corpus (one conversation object per line). Structural
// problems (bad JSON, missing fields, unknown labels, duplicate ids) throw;
// semantic labelling rules are checked separately by validate_conversation.
Corpus parse_corpus(const std::filesystem::path& path, const LabelSchema& schema);
Corpus parse_corpus_text(const std::string& text, const LabelSchema& schema);

std::string serialize_corpus(const Corpus& corpus);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct Violation {
  std::string conv_id;
  int utterance_index;  // -1 for conversation-level rules
  std::string rule;
  std::string message;
};

std::vector<Violation> validate_conversation(const Conversation& conv);
std::vector<Violation> validate_corpus(const Corpus& corpus);

struct CorpusStats {
  long n_conversations = 0;
  long n_utterances = 0;
  long n_speakers = 0;  // distinct speaker ids corpus-wide
  double mean_conversation_speakers = 0.0;
  double length_median = 0.0;  // utterances per conversation
  long length_min = 0;
  long length_max = 0;
  double mean_utterance_tokens = 0.0;
  std::array<long, kNumTactics> label_counts{};
  double multilabel_fraction = 0.0;
};

CorpusStats corpus_stats(const Corpus& corpus);

// Conversation-level split with seeded shuffling; part sizes follow the
// largest-remainder rule so they always sum to the corpus size.
std::array<Corpus, 3> split_corpus(const Corpus& corpus, const std::array<double, 3>& ratios,
                                   std::uint64_t seed);

}  // namespace dispute
