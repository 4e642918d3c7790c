#include "dispute/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dispute/error.hpp"

namespace dispute {

namespace {

constexpr double kMirrorTolerance = 1e-9;

bool is_attack_utterance(const Utterance& u) { return u.labels.has_personal_attack(); }

// Accumulates rebuttal evidence under either averaging mode: micro sums
// individual label levels, macro sums per-utterance mean levels.
struct MeanAccum {
  double total = 0.0;
  long n = 0;

  void add(const LabelVector& labels, MeanMode mode) {
    long count = labels.rebuttal_count();
    if (count == 0) return;
    double sum = 0.0;
    for (int i = 0; i < kNumTactics; ++i) {
      if (!labels.test(i)) continue;
      auto level = rebuttal_level(static_cast<Tactic>(i));
      if (level) sum += static_cast<double>(*level);
    }
    if (mode == MeanMode::Micro) {
      total += sum;
      n += count;
    } else {
      total += sum / static_cast<double>(count);
      n += 1;
    }
  }

  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
  }
};

std::optional<double> conversation_mean(const Conversation& conv, MeanMode mode) {
  MeanAccum acc;
  for (const Utterance& u : conv.utterances) acc.add(u.labels, mode);
  return acc.mean();
}

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> median_of(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

}  // namespace

std::optional<double> micro_mean_rebuttal(const Conversation& conv) {
  return conversation_mean(conv, MeanMode::Micro);
}

std::optional<double> macro_mean_rebuttal(const Conversation& conv) {
  return conversation_mean(conv, MeanMode::Macro);
}

std::vector<ConversationScore> conversation_scores(const Corpus& corpus) {
  std::vector<ConversationScore> scores;
  scores.reserve(corpus.conversations.size());
  for (const Conversation& conv : corpus.conversations) {
    ConversationScore s;
    s.conv_id = conv.conv_id;
    s.micro_mean = micro_mean_rebuttal(conv);
    s.macro_mean = macro_mean_rebuttal(conv);
    s.escalated = conv.escalated;
    scores.push_back(std::move(s));
  }
  return scores;
}

TestResult escalation_correlation(const Corpus& corpus, MeanMode mode, long n_resamples,
                                  std::uint64_t seed, int threads) {
  std::vector<double> means;
  std::vector<double> outcomes;
  for (const Conversation& conv : corpus.conversations) {
    if (!conv.escalated.has_value()) continue;
    auto mean = conversation_mean(conv, mode);
    if (!mean.has_value()) continue;
    means.push_back(*mean);
    outcomes.push_back(*conv.escalated ? 1.0 : 0.0);
  }
  if (means.size() < 3)
    throw Error("escalation_correlation: fewer than 3 conversations with defined scores");
  return spearman(means, outcomes, n_resamples, seed, threads);
}

std::vector<PmiEntry> attack_pmi_table(const Corpus& corpus) {
  long n = 0;
  long n_attack = 0;
  std::array<long, kNumTactics> count_label{};
  std::array<long, kNumTactics> count_joint{};
  for (const Conversation& conv : corpus.conversations) {
    for (const Utterance& u : conv.utterances) {
      ++n;
      const bool attack = is_attack_utterance(u);
      if (attack) ++n_attack;
      for (int i = 0; i < kNumTactics; ++i) {
        if (!u.labels.test(i)) continue;
        ++count_label[i];
        if (attack) ++count_joint[i];
      }
    }
  }
  if (n_attack == 0) throw Error("attack_pmi_table: corpus contains no personal attacks");
  std::vector<PmiEntry> table;
  for (int i = 0; i < kNumTactics; ++i) {
    const Tactic t = static_cast<Tactic>(i);
    if (is_personal_attack(t)) continue;
    PmiEntry entry;
    entry.label = t;
    entry.count_label = count_label[i];
    entry.count_joint = count_joint[i];
    if (count_joint[i] > 0 && count_label[i] > 0) {
      entry.pmi = pmi(count_joint[i], count_label[i], n_attack, n);
    }
    table.push_back(entry);
  }
  return table;
}

AttackReport attack_report(const Corpus& corpus) {
  AttackReport report;
  long attacks_in_escalated = 0;
  long attacks_with_flag = 0;
  long immediate = 0;
  long recovered = 0;
  long recovered_first = 0;
  long with_attack_escalated = 0, recovered_escalated = 0;
  long with_attack_resolved = 0, recovered_resolved = 0;
  long reoffended = 0;
  long other_attacked = 0;

  for (const Conversation& conv : corpus.conversations) {
    int first_attack = -1;
    int last_attack = -1;
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      if (!is_attack_utterance(conv.utterances[i])) continue;
      ++report.n_attacks;
      if (first_attack < 0) first_attack = static_cast<int>(i);
      last_attack = static_cast<int>(i);
      if (conv.escalated.has_value()) {
        ++attacks_with_flag;
        if (*conv.escalated) ++attacks_in_escalated;
      }
      if (i + 1 < conv.utterances.size() && is_attack_utterance(conv.utterances[i + 1]))
        ++immediate;
    }
    if (first_attack < 0) continue;
    ++report.n_conversations_with_attack;

    bool rec = false;
    for (std::size_t i = last_attack + 1; i < conv.utterances.size(); ++i) {
      auto level = reference_level(conv.utterances[i].labels);
      if (level && *level >= 5) {
        rec = true;
        break;
      }
    }
    bool rec_first = false;
    for (std::size_t i = first_attack + 1; i < conv.utterances.size(); ++i) {
      auto level = reference_level(conv.utterances[i].labels);
      if (level && *level >= 5) {
        rec_first = true;
        break;
      }
    }
    if (rec) ++recovered;
    if (rec_first) ++recovered_first;
    if (conv.escalated.has_value()) {
      if (*conv.escalated) {
        ++with_attack_escalated;
        if (rec) ++recovered_escalated;
      } else {
        ++with_attack_resolved;
        if (rec) ++recovered_resolved;
      }
    }

    const std::string& offender = conv.utterances[first_attack].speaker;
    bool again = false, other = false;
    for (std::size_t i = first_attack + 1; i < conv.utterances.size(); ++i) {
      if (!is_attack_utterance(conv.utterances[i])) continue;
      if (conv.utterances[i].speaker == offender)
        again = true;
      else
        other = true;
    }
    if (again) ++reoffended;
    if (other) ++other_attacked;
  }

  report.share_in_escalated = ratio(attacks_in_escalated, attacks_with_flag);
  report.recovery_rate_overall = ratio(recovered, report.n_conversations_with_attack);
  report.recovery_rate_escalated = ratio(recovered_escalated, with_attack_escalated);
  report.recovery_rate_resolved = ratio(recovered_resolved, with_attack_resolved);
  report.recovery_rate_first_anchor =
      ratio(recovered_first, report.n_conversations_with_attack);
  report.immediate_retaliation_rate = ratio(immediate, report.n_attacks);
  report.reoffend_prob = ratio(reoffended, report.n_conversations_with_attack);
  report.other_user_attack_prob =
      ratio(other_attacked, report.n_conversations_with_attack);
  return report;
}

std::map<std::string, UserProfile> user_profiles(const Corpus& corpus) {
  std::map<std::string, UserProfile> profiles;
  std::map<std::string, long> totals;
  for (const Conversation& conv : corpus.conversations) {
    for (const Utterance& u : conv.utterances) {
      ++totals[u.speaker];
      auto level = reference_level(u.labels);
      if (!level.has_value()) continue;
      UserProfile& p = profiles[u.speaker];
      if (p.n_rebuttal_utterances == 0) {
        p.min = *level;
        p.max = *level;
      } else {
        p.min = std::min(p.min, *level);
        p.max = std::max(p.max, *level);
      }
      p.mean += static_cast<double>(*level);
      ++p.n_rebuttal_utterances;
    }
  }
  for (auto& [user, p] : profiles) {
    p.mean /= static_cast<double>(p.n_rebuttal_utterances);
    p.range = p.max - p.min;
    p.n_utterances = totals[user];
  }
  return profiles;
}

std::optional<double> median_range(const std::map<std::string, UserProfile>& profiles,
                                   long min_utterances) {
  std::vector<double> ranges;
  for (const auto& [user, p] : profiles) {
    if (p.n_rebuttal_utterances >= min_utterances)
      ranges.push_back(static_cast<double>(p.range));
  }
  return median_of(std::move(ranges));
}

long count_min_level_at_least(const std::map<std::string, UserProfile>& profiles,
                              int level) {
  long count = 0;
  for (const auto& [user, p] : profiles) {
    if (p.min >= level) ++count;
  }
  return count;
}

MirroringResult mirroring(const Corpus& corpus, MeanMode mode) {
  std::map<std::string, std::set<std::string>> appearances;
  std::map<std::string, MeanAccum> user_overall;
  for (const Conversation& conv : corpus.conversations) {
    for (const Utterance& u : conv.utterances) {
      appearances[u.speaker].insert(conv.conv_id);
      user_overall[u.speaker].add(u.labels, mode);
    }
  }

  MirroringResult result;
  long defined = 0;
  long positive = 0;
  for (const Conversation& conv : corpus.conversations) {
    auto conv_mean = conversation_mean(conv, mode);
    std::map<std::string, MeanAccum> in_conv;
    for (const Utterance& u : conv.utterances) in_conv[u.speaker].add(u.labels, mode);
    for (const auto& [user, acc] : in_conv) {
      if (appearances[user].size() < 2) continue;
      auto r_uc = acc.mean();
      auto r_u = user_overall[user].mean();
      if (!r_uc.has_value() || !r_u.has_value() || !conv_mean.has_value()) continue;
      MirrorScore score;
      score.user_id = user;
      score.conv_id = conv.conv_id;
      const double denom = *r_u - *conv_mean;
      if (std::abs(denom) < kMirrorTolerance) {
        score.defined = false;
      } else {
        score.defined = true;
        score.m = (*r_u - *r_uc) / denom;
        ++defined;
        if (score.m > 0.0) ++positive;
      }
      result.scores.push_back(std::move(score));
    }
  }
  result.positive_fraction = ratio(positive, defined);
  return result;
}

}  // namespace dispute
