#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dispute {

inline constexpr int kNumTactics = 18;

enum class TacticKind { Rebuttal, Coordination };

// The 18 canonical dispute tactics. Enum values are the canonical vector
// positions: rebuttal tactics ascending by level (name as tie-break),
// followed by coordination tactics alphabetically. Checkpoints and label
// vectors rely on this layout staying fixed.
enum class Tactic : std::uint8_t {
  NameCalling = 0,         // rebuttal level 0
  CredibilityAttack = 1,   // rebuttal level 1
  Derailing = 2,           // rebuttal level 2
  Policing = 3,            // rebuttal level 3
  RepeatedArgument = 4,    // rebuttal level 4
  StatingStance = 5,       // rebuttal level 4
  Counterargument = 6,     // rebuttal level 5
  Refutation = 7,          // rebuttal level 6
  RefutingCentralPoint = 8,  // rebuttal level 7
  AskingQuestions = 9,
  BailingOut = 10,
  ConcedingRecanting = 11,
  Contextualisation = 12,
  CoordinatingEdits = 13,
  IDontKnow = 14,
  Other = 15,
  ProvidingClarification = 16,
  SuggestingCompromise = 17,
};

struct TacticInfo {
  std::string_view name;
  TacticKind kind;
  int level;  // -1 for coordination tactics
};

const std::array<TacticInfo, kNumTactics>& tactic_table();
const TacticInfo& tactic_info(Tactic t);
std::string_view tactic_name(Tactic t);

// Canonical-name lookup; nullopt when the string is not a canonical name.
std::optional<Tactic> find_tactic(std::string_view name);

std::optional<int> rebuttal_level(Tactic t);
bool is_rebuttal(Tactic t);
bool is_coordination(Tactic t);

// Personal attacks are the two lowest rebuttal levels: name calling (0) and
// credibility attacks (1).
bool is_personal_attack(Tactic t);

// An utterance labelset as an 18-bit indicator in canonical order.
class LabelVector {
 public:
  LabelVector() = default;
  LabelVector(std::initializer_list<Tactic> tactics) {
    for (Tactic t : tactics) set(t);
  }

  static LabelVector from_indices(std::span<const int> indices);
  static LabelVector from_bits(std::uint32_t bits) {
    LabelVector v;
    v.bits_ = bits & kMask;
    return v;
  }

  bool test(Tactic t) const { return test(static_cast<int>(t)); }
  bool test(int index) const { return (bits_ >> index) & 1u; }
  void set(Tactic t, bool value = true) { set(static_cast<int>(t), value); }
  void set(int index, bool value = true) {
    if (value)
      bits_ |= (1u << index);
    else
      bits_ &= ~(1u << index);
  }

  int count() const;
  bool any() const { return bits_ != 0; }
  bool none() const { return bits_ == 0; }
  std::uint32_t bits() const { return bits_; }

  bool contains(const LabelVector& other) const {
    return (bits_ & other.bits_) == other.bits_;
  }
  LabelVector operator&(const LabelVector& o) const { return from_bits(bits_ & o.bits_); }
  LabelVector operator|(const LabelVector& o) const { return from_bits(bits_ | o.bits_); }

  std::vector<int> to_indices() const;
  std::vector<std::string> to_names() const;

  int rebuttal_count() const;
  int coordination_count() const;
  bool has_rebuttal() const { return rebuttal_count() > 0; }
  bool has_personal_attack() const {
    return test(Tactic::NameCalling) || test(Tactic::CredibilityAttack);
  }

  bool operator==(const LabelVector&) const = default;
  // Canonical vector order: ascending numeric value of the indicator bits,
  // canonical index i contributing 2^i. Used as a deterministic tie-break.
  bool operator<(const LabelVector& o) const { return bits_ < o.bits_; }

 private:
  static constexpr std::uint32_t kMask = (1u << kNumTactics) - 1;
  std::uint32_t bits_ = 0;
};

// Set-of-labels <-> indicator-vector conversions. Inverse bijections.
LabelVector to_vector(std::span<const int> label_indices);
std::vector<int> from_vector(const LabelVector& v);

// Highest rebuttal level in the set; nullopt when no rebuttal label.
std::optional<int> reference_level(const LabelVector& labels);

// How the per-utterance rebuttal levels collapse to a single reference value
// when an utterance carries several rebuttal labels.
enum class LevelAggregate { Max, Median, Min };

std::optional<double> aggregate_level(const LabelVector& labels, LevelAggregate agg);

enum class Ordinality : std::uint8_t { Up = 0, Down = 1, Same = 2, Coordination = 3 };

inline constexpr int kNumOrdinality = 4;

std::string_view ordinality_name(Ordinality o);

// Per-utterance rebuttal-level direction. Coordination-only utterances map
// to Coordination and do not advance the reference; the first
// rebuttal-bearing utterance is compared against reference level 3.
std::vector<Ordinality> ordinality_sequence(std::span<const LabelVector> labelsets,
                                            LevelAggregate agg = LevelAggregate::Max);

}  // namespace dispute
