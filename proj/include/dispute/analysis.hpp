#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dispute/corpus.hpp"
#include "dispute/stats.hpp"
#include "dispute/taxonomy.hpp"

namespace dispute {

enum class MeanMode { Micro, Macro };

// Mean rebuttal level weighting every rebuttal label equally.
std::optional<double> micro_mean_rebuttal(const Conversation& conv);
// Mean over utterances of the per-utterance mean level; rebuttal-free
// utterances are skipped.
std::optional<double> macro_mean_rebuttal(const Conversation& conv);

struct ConversationScore {
  std::string conv_id;
  std::optional<double> micro_mean;
  std::optional<double> macro_mean;
  std::optional<bool> escalated;
};

std::vector<ConversationScore> conversation_scores(const Corpus& corpus);

// Spearman correlation between per-conversation mean rebuttal level and the
// escalation outcome (0/1), over conversations where both are defined.
TestResult escalation_correlation(const Corpus& corpus, MeanMode mode,
                                  long n_resamples = 10000, std::uint64_t seed = 0,
                                  int threads = 1);

struct PmiEntry {
  Tactic label = Tactic::Other;
  long count_label = 0;
  long count_joint = 0;
  std::optional<double> pmi;  // absent when the joint count is zero
};

// PMI between each non-attack label and "utterance carries a personal
// attack", counted at utterance granularity, in canonical label order.
std::vector<PmiEntry> attack_pmi_table(const Corpus& corpus);

struct AttackReport {
  long n_attacks = 0;
  long n_conversations_with_attack = 0;
  // Fraction of attack utterances sitting in escalated conversations.
  std::optional<double> share_in_escalated;
  // Recovery anchored at the final attack: some later utterance reaches
  // reference level >= 5 (no further attacks is then automatic).
  std::optional<double> recovery_rate_overall;
  std::optional<double> recovery_rate_escalated;
  std::optional<double> recovery_rate_resolved;
  // Variant anchored at the first attack: level >= 5 reached at any point
  // afterwards, later attacks permitted.
  std::optional<double> recovery_rate_first_anchor;
  std::optional<double> immediate_retaliation_rate;
  std::optional<double> reoffend_prob;
  std::optional<double> other_user_attack_prob;
};

AttackReport attack_report(const Corpus& corpus);

struct UserProfile {
  double mean = 0.0;
  int min = 0;
  int max = 0;
  int range = 0;
  long n_utterances = 0;
  long n_rebuttal_utterances = 0;
};

// Per-user statistics over reference levels of rebuttal-bearing utterances;
// users with none are omitted.
std::map<std::string, UserProfile> user_profiles(const Corpus& corpus);

// Median of per-user level ranges, restricted to users with at least
// min_utterances rebuttal-bearing utterances.
std::optional<double> median_range(const std::map<std::string, UserProfile>& profiles,
                                   long min_utterances = 2);
long count_min_level_at_least(const std::map<std::string, UserProfile>& profiles,
                              int level);

struct MirrorScore {
  std::string user_id;
  std::string conv_id;
  double m = 0.0;
  bool defined = false;  // false when |user mean - conversation mean| < 1e-9
};

struct MirroringResult {
  std::vector<MirrorScore> scores;
  std::optional<double> positive_fraction;  // over defined scores
};

// m = (user overall mean - user in-conversation mean) / (user overall mean -
// conversation mean), for users appearing in >= 2 conversations.
MirroringResult mirroring(const Corpus& corpus, MeanMode mode = MeanMode::Micro);

}  // namespace dispute
