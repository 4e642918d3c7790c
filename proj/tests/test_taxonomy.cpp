#include <doctest.h>

#include <array>
#include <vector>

#include "dispute/taxonomy.hpp"

using namespace dispute;

TEST_CASE("canonical tactic names and order") {
  const std::array<const char*, kNumTactics> expected = {
      "name-calling",        "credibility-attack", "derailing",
      "policing",            "repeated-argument",  "stating-stance",
      "counterargument",     "refutation",         "refuting-central-point",
      "asking-questions",    "bailing-out",        "conceding-recanting",
      "contextualisation",   "coordinating-edits", "i-dont-know",
      "other",               "providing-clarification", "suggesting-compromise"};
  for (int i = 0; i < kNumTactics; ++i) {
    const Tactic t = static_cast<Tactic>(i);
    CHECK(tactic_name(t) == expected[i]);
    REQUIRE(find_tactic(expected[i]).has_value());
    CHECK(*find_tactic(expected[i]) == t);
  }
  CHECK_FALSE(find_tactic("not-a-tactic").has_value());
  CHECK_FALSE(find_tactic("Name calling").has_value());
}

TEST_CASE("rebuttal levels and tactic kinds") {
  const std::array<int, 9> levels = {0, 1, 2, 3, 4, 4, 5, 6, 7};
  for (int i = 0; i < 9; ++i) {
    const Tactic t = static_cast<Tactic>(i);
    CHECK(is_rebuttal(t));
    CHECK_FALSE(is_coordination(t));
    REQUIRE(rebuttal_level(t).has_value());
    CHECK(*rebuttal_level(t) == levels[i]);
  }
  for (int i = 9; i < kNumTactics; ++i) {
    const Tactic t = static_cast<Tactic>(i);
    CHECK(is_coordination(t));
    CHECK_FALSE(is_rebuttal(t));
    CHECK_FALSE(rebuttal_level(t).has_value());
  }
  CHECK(is_personal_attack(Tactic::NameCalling));
  CHECK(is_personal_attack(Tactic::CredibilityAttack));
  for (int i = 2; i < kNumTactics; ++i) {
    CHECK_FALSE(is_personal_attack(static_cast<Tactic>(i)));
  }
}

TEST_CASE("label vector set operations") {
  LabelVector v{Tactic::NameCalling, Tactic::Counterargument};
  CHECK(v.count() == 2);
  CHECK(v.any());
  CHECK(v.test(Tactic::NameCalling));
  CHECK_FALSE(v.test(Tactic::Refutation));
  CHECK(v.bits() == ((1u << 0) | (1u << 6)));

  v.set(Tactic::Refutation);
  CHECK(v.count() == 3);
  v.set(Tactic::Refutation, false);
  CHECK(v.count() == 2);

  LabelVector sub{Tactic::NameCalling};
  CHECK(v.contains(sub));
  CHECK_FALSE(sub.contains(v));
  CHECK((v & sub) == sub);
  CHECK((v | sub) == v);

  CHECK(LabelVector{}.none());
  CHECK(LabelVector{Tactic::Counterargument} < v);  // 64 < 65 numerically

  CHECK(v.to_indices() == std::vector<int>{0, 6});
  CHECK(v.to_names() == std::vector<std::string>{"name-calling", "counterargument"});

  const std::vector<int> idx = {6, 0};
  CHECK(LabelVector::from_indices(idx) == v);
  CHECK(LabelVector::from_bits(v.bits()) == v);
}

TEST_CASE("label vector rebuttal and coordination counters") {
  LabelVector v{Tactic::NameCalling, Tactic::Refutation, Tactic::AskingQuestions};
  CHECK(v.rebuttal_count() == 2);
  CHECK(v.coordination_count() == 1);
  CHECK(v.has_rebuttal());
  CHECK(v.has_personal_attack());

  LabelVector coord{Tactic::AskingQuestions, Tactic::Other};
  CHECK(coord.rebuttal_count() == 0);
  CHECK_FALSE(coord.has_rebuttal());
  CHECK_FALSE(coord.has_personal_attack());
}

TEST_CASE("indicator vector conversions are inverse bijections") {
  const std::vector<int> idx = {1, 5, 17};
  LabelVector v = to_vector(idx);
  CHECK(from_vector(v) == idx);
  for (std::uint32_t bits : {0u, 1u, 0x2FFu, (1u << 18) - 1}) {
    LabelVector w = LabelVector::from_bits(bits);
    CHECK(to_vector(from_vector(w)) == w);
  }
}

TEST_CASE("reference level is the max rebuttal level") {
  CHECK(*reference_level(LabelVector{Tactic::NameCalling, Tactic::Refutation}) == 6);
  CHECK(*reference_level(LabelVector{Tactic::Policing}) == 3);
  CHECK_FALSE(reference_level(LabelVector{Tactic::AskingQuestions}).has_value());
  CHECK_FALSE(reference_level(LabelVector{}).has_value());
}

TEST_CASE("aggregate level max median min") {
  LabelVector v{Tactic::NameCalling, Tactic::Refutation};  // levels 0, 6
  CHECK(*aggregate_level(v, LevelAggregate::Max) == doctest::Approx(6.0));
  CHECK(*aggregate_level(v, LevelAggregate::Min) == doctest::Approx(0.0));
  CHECK(*aggregate_level(v, LevelAggregate::Median) == doctest::Approx(3.0));

  LabelVector single{Tactic::Counterargument};  // level 5
  for (auto agg : {LevelAggregate::Max, LevelAggregate::Median, LevelAggregate::Min}) {
    CHECK(*aggregate_level(single, agg) == doctest::Approx(5.0));
  }

  // Odd count takes the middle element.
  LabelVector odd{Tactic::NameCalling, Tactic::CredibilityAttack, Tactic::Derailing};
  CHECK(*aggregate_level(odd, LevelAggregate::Median) == doctest::Approx(1.0));

  CHECK_FALSE(aggregate_level(LabelVector{Tactic::Other}, LevelAggregate::Max).has_value());
  CHECK_FALSE(aggregate_level(LabelVector{}, LevelAggregate::Median).has_value());
}

TEST_CASE("ordinality sequence against reference level 3") {
  const std::vector<LabelVector> seq = {
      LabelVector{Tactic::Counterargument},   // level 5 vs ref 3
      LabelVector{Tactic::AskingQuestions},   // coordination only
      LabelVector{Tactic::Derailing},         // level 2 vs ref 5
  };
  const auto ord = ordinality_sequence(seq);
  REQUIRE(ord.size() == 3);
  CHECK(ord[0] == Ordinality::Up);
  CHECK(ord[1] == Ordinality::Coordination);
  CHECK(ord[2] == Ordinality::Down);
}

TEST_CASE("ordinality same and reference advancement") {
  const std::vector<LabelVector> seq = {
      LabelVector{Tactic::Policing},         // level 3 == initial ref 3
      LabelVector{Tactic::Counterargument},  // 5 > 3
      LabelVector{Tactic::Counterargument},  // 5 == 5
      LabelVector{Tactic::Refutation},       // 6 > 5
  };
  const auto ord = ordinality_sequence(seq);
  REQUIRE(ord.size() == 4);
  CHECK(ord[0] == Ordinality::Same);
  CHECK(ord[1] == Ordinality::Up);
  CHECK(ord[2] == Ordinality::Same);
  CHECK(ord[3] == Ordinality::Up);

  CHECK(ordinality_sequence(std::vector<LabelVector>{}).empty());
}

TEST_CASE("coordination utterances leave the reference unchanged") {
  const std::vector<LabelVector> seq = {
      LabelVector{Tactic::Refutation},       // 6 > 3, ref -> 6
      LabelVector{Tactic::AskingQuestions},  // ref stays 6
      LabelVector{Tactic::Counterargument},  // 5 < 6
  };
  const auto ord = ordinality_sequence(seq);
  CHECK(ord[2] == Ordinality::Down);
}

TEST_CASE("ordinality respects the aggregate mode") {
  // Levels {0, 6}: max 6 (up vs 3), median 3 (same), min 0 (down).
  const std::vector<LabelVector> seq = {
      LabelVector{Tactic::NameCalling, Tactic::Refutation}};
  CHECK(ordinality_sequence(seq, LevelAggregate::Max)[0] == Ordinality::Up);
  CHECK(ordinality_sequence(seq, LevelAggregate::Median)[0] == Ordinality::Same);
  CHECK(ordinality_sequence(seq, LevelAggregate::Min)[0] == Ordinality::Down);
}

TEST_CASE("ordinality names") {
  CHECK(ordinality_name(Ordinality::Up) == "up");
  CHECK(ordinality_name(Ordinality::Down) == "down");
  CHECK(ordinality_name(Ordinality::Same) == "same");
  CHECK(ordinality_name(Ordinality::Coordination) == "coordination");
}
