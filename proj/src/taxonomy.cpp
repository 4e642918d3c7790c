#include "dispute/taxonomy.hpp"

#include <algorithm>
#include <bit>

namespace dispute {

const std::array<TacticInfo, kNumTactics>& tactic_table() {
  static const std::array<TacticInfo, kNumTactics> table = {{
      {"name-calling", TacticKind::Rebuttal, 0},
      {"credibility-attack", TacticKind::Rebuttal, 1},
      {"derailing", TacticKind::Rebuttal, 2},
      {"policing", TacticKind::Rebuttal, 3},
      {"repeated-argument", TacticKind::Rebuttal, 4},
      {"stating-stance", TacticKind::Rebuttal, 4},
      {"counterargument", TacticKind::Rebuttal, 5},
      {"refutation", TacticKind::Rebuttal, 6},
      {"refuting-central-point", TacticKind::Rebuttal, 7},
      {"asking-questions", TacticKind::Coordination, -1},
      {"bailing-out", TacticKind::Coordination, -1},
      {"conceding-recanting", TacticKind::Coordination, -1},
      {"contextualisation", TacticKind::Coordination, -1},
      {"coordinating-edits", TacticKind::Coordination, -1},
      {"i-dont-know", TacticKind::Coordination, -1},
      {"other", TacticKind::Coordination, -1},
      {"providing-clarification", TacticKind::Coordination, -1},
      {"suggesting-compromise", TacticKind::Coordination, -1},
  }};
  return table;
}

const TacticInfo& tactic_info(Tactic t) { return tactic_table()[static_cast<int>(t)]; }

std::string_view tactic_name(Tactic t) { return tactic_info(t).name; }

std::optional<Tactic> find_tactic(std::string_view name) {
  const auto& table = tactic_table();
  for (int i = 0; i < kNumTactics; ++i) {
    if (table[i].name == name) return static_cast<Tactic>(i);
  }
  return std::nullopt;
}

std::optional<int> rebuttal_level(Tactic t) {
  const TacticInfo& info = tactic_info(t);
  if (info.kind != TacticKind::Rebuttal) return std::nullopt;
  return info.level;
}

bool is_rebuttal(Tactic t) { return tactic_info(t).kind == TacticKind::Rebuttal; }

bool is_coordination(Tactic t) { return tactic_info(t).kind == TacticKind::Coordination; }

bool is_personal_attack(Tactic t) {
  auto level = rebuttal_level(t);
  return level && (*level == 0 || *level == 1);
}

LabelVector LabelVector::from_indices(std::span<const int> indices) {
  LabelVector v;
  for (int i : indices) v.set(i);
  return v;
}

int LabelVector::count() const { return std::popcount(bits_); }

std::vector<int> LabelVector::to_indices() const {
  std::vector<int> out;
  for (int i = 0; i < kNumTactics; ++i) {
    if (test(i)) out.push_back(i);
  }
  return out;
}

std::vector<std::string> LabelVector::to_names() const {
  std::vector<std::string> out;
  for (int i : to_indices()) out.emplace_back(tactic_table()[i].name);
  return out;
}

int LabelVector::rebuttal_count() const {
  constexpr std::uint32_t rebuttal_mask = (1u << 9) - 1;  // indices 0..8
  return std::popcount(bits_ & rebuttal_mask);
}

int LabelVector::coordination_count() const { return count() - rebuttal_count(); }

LabelVector to_vector(std::span<const int> label_indices) {
  return LabelVector::from_indices(label_indices);
}

std::vector<int> from_vector(const LabelVector& v) { return v.to_indices(); }

std::optional<int> reference_level(const LabelVector& labels) {
  std::optional<int> best;
  for (int i = 0; i < kNumTactics; ++i) {
    if (!labels.test(i)) continue;
    auto level = rebuttal_level(static_cast<Tactic>(i));
    if (level && (!best || *level > *best)) best = *level;
  }
  return best;
}

std::optional<double> aggregate_level(const LabelVector& labels, LevelAggregate agg) {
  std::vector<int> levels;
  for (int i = 0; i < kNumTactics; ++i) {
    if (!labels.test(i)) continue;
    if (auto level = rebuttal_level(static_cast<Tactic>(i))) levels.push_back(*level);
  }
  if (levels.empty()) return std::nullopt;
  std::sort(levels.begin(), levels.end());
  switch (agg) {
    case LevelAggregate::Max:
      return static_cast<double>(levels.back());
    case LevelAggregate::Min:
      return static_cast<double>(levels.front());
    case LevelAggregate::Median: {
      std::size_t n = levels.size();
      if (n % 2 == 1) return static_cast<double>(levels[n / 2]);
      return (levels[n / 2 - 1] + levels[n / 2]) / 2.0;
    }
  }
  return std::nullopt;
}

std::string_view ordinality_name(Ordinality o) {
  switch (o) {
    case Ordinality::Up:
      return "up";
    case Ordinality::Down:
      return "down";
    case Ordinality::Same:
      return "same";
    case Ordinality::Coordination:
      return "coordination";
  }
  return "?";
}

std::vector<Ordinality> ordinality_sequence(std::span<const LabelVector> labelsets,
                                            LevelAggregate agg) {
  std::vector<Ordinality> out;
  out.reserve(labelsets.size());
  double reference = 3.0;
  for (const LabelVector& labels : labelsets) {
    auto level = aggregate_level(labels, agg);
    if (!level) {
      out.push_back(Ordinality::Coordination);
      continue;
    }
    if (*level > reference)
      out.push_back(Ordinality::Up);
    else if (*level < reference)
      out.push_back(Ordinality::Down);
    else
      out.push_back(Ordinality::Same);
    reference = *level;
  }
  return out;
}

}  // namespace dispute
