#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "dispute/corpus.hpp"
#include "dispute/error.hpp"
#include "dispute/features.hpp"

using namespace dispute;

namespace {

using Tokens = std::vector<std::string>;

Corpus one_conv_corpus(std::vector<std::string> texts) {
  Corpus corpus;
  Conversation c;
  c.conv_id = "c";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Utterance u;
    u.index = static_cast<int>(i);
    u.speaker = i % 2 == 0 ? "a" : "b";
    u.text = std::move(texts[i]);
    u.labels = LabelVector{Tactic::Other};
    c.utterances.push_back(std::move(u));
  }
  corpus.conversations.push_back(std::move(c));
  return corpus;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("Hello, world!") == Tokens{"hello", ",", "world", "!"});
  CHECK(tokenize("Don't stop") == Tokens{"don", "'", "t", "stop"});
  CHECK(tokenize("a  b\tc\nd") == Tokens{"a", "b", "c", "d"});
  CHECK(tokenize("x=y+z") == Tokens{"x", "=", "y", "+", "z"});
  CHECK(tokenize("ONE two Three") == Tokens{"one", "two", "three"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t\n ").empty());
}

TEST_CASE("tokenize handles utf-8 text") {
  // Accented letters stay in-token; the em-dash is punctuation.
  CHECK(tokenize("Café — test") == Tokens{"café", "—", "test"});
  // Latin-1 uppercase folds to lowercase.
  CHECK(tokenize("ÉTÉ") == Tokens{"été"});
  // Multi-byte sequences are never split mid-character.
  CHECK(tokenize("回复 ok") == Tokens{"回复", "ok"});
}

TEST_CASE("vocab assigns index zero to unknown") {
  Vocab vocab({"alpha", "beta"}, 1, 100);
  CHECK(vocab.size() == 3);
  CHECK(vocab.lookup("alpha") == 1);
  CHECK(vocab.lookup("beta") == 2);
  CHECK(vocab.lookup("gamma") == Vocab::kUnkIndex);
  CHECK(Vocab::kUnkIndex == 0);
}

TEST_CASE("build vocab orders by frequency with lexicographic ties") {
  // Counts: b=2, a=2, c=1. Ties sort lexicographically, so a before b.
  const Corpus corpus = one_conv_corpus({"b b a", "a c"});
  const Vocab vocab = build_vocab(corpus, 1, 100);
  CHECK(vocab.tokens() == Tokens{"a", "b", "c"});
  CHECK(vocab.lookup("a") == 1);
  CHECK(vocab.lookup("b") == 2);
  CHECK(vocab.lookup("c") == 3);
}

TEST_CASE("build vocab honors min_freq and max_size") {
  const Corpus corpus = one_conv_corpus({"x x x y y z", "x y w"});
  // Counts: x=4, y=3, z=1, w=1.
  CHECK(build_vocab(corpus, 2, 100).tokens() == Tokens{"x", "y"});
  CHECK(build_vocab(corpus, 1, 3).tokens() == Tokens{"x", "y", "w"});
  CHECK_THROWS_AS(build_vocab(Corpus{}, 1, 10), Error);
}

TEST_CASE("vocab json and file round trips") {
  Vocab vocab({"one", "two", "three"}, 5, 77);
  const Vocab back = Vocab::from_json_string(vocab.to_json_string());
  CHECK(back == vocab);
  CHECK(back.min_freq() == 5);
  CHECK(back.max_size() == 77);

  const auto path = std::filesystem::temp_directory_path() / "dispute_test_vocab.json";
  vocab.save(path);
  CHECK(Vocab::load(path) == vocab);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(Vocab::from_json_string("{}"), Error);
}

TEST_CASE("bag of words counts and binary mode") {
  Vocab vocab({"the", "cat"}, 1, 100);
  const FeatureVector v = bow_vector("the cat saw the dog", vocab);
  CHECK(v.dim == 3);
  // "saw" and "dog" are unknown, pooled at index 0.
  REQUIRE(v.entries.size() == 3);
  CHECK(v.entries[0] == std::pair<int, double>{0, 2.0});
  CHECK(v.entries[1] == std::pair<int, double>{1, 2.0});
  CHECK(v.entries[2] == std::pair<int, double>{2, 1.0});
  CHECK(v.value_at(1) == doctest::Approx(2.0));
  CHECK(v.value_at(2) == doctest::Approx(1.0));

  const FeatureVector b = bow_vector("the cat saw the dog", vocab, true);
  CHECK(b.entries[0] == std::pair<int, double>{0, 1.0});
  CHECK(b.entries[1] == std::pair<int, double>{1, 1.0});

  const FeatureVector empty = bow_vector("", vocab);
  CHECK(empty.dim == 3);
  CHECK(empty.entries.empty());
  CHECK(empty.value_at(1) == doctest::Approx(0.0));
}

TEST_CASE("context vector sums strictly earlier utterances") {
  Vocab vocab({"a", "b", "c"}, 1, 100);
  Corpus corpus = one_conv_corpus({"a b", "b c", "c"});
  const Conversation& conv = corpus.conversations[0];

  const FeatureVector at0 = context_vector(conv, 0, vocab);
  CHECK(at0.dim == 4);
  CHECK(at0.entries.empty());

  const FeatureVector at2 = context_vector(conv, 2, vocab);
  CHECK(at2.value_at(vocab.lookup("a")) == doctest::Approx(1.0));
  CHECK(at2.value_at(vocab.lookup("b")) == doctest::Approx(2.0));
  CHECK(at2.value_at(vocab.lookup("c")) == doctest::Approx(1.0));

  CHECK_THROWS_AS(context_vector(conv, 3, vocab), Error);
  CHECK_THROWS_AS(context_vector(conv, -1, vocab), Error);
}

TEST_CASE("feature concatenation shifts the second block") {
  FeatureVector a{3, {{0, 1.0}, {2, 2.0}}};
  FeatureVector b{2, {{1, 5.0}}};
  const FeatureVector cat = concat_features(a, b);
  CHECK(cat.dim == 5);
  REQUIRE(cat.entries.size() == 3);
  CHECK(cat.entries[2] == std::pair<int, double>{4, 5.0});
  CHECK(cat.value_at(0) == doctest::Approx(1.0));
  CHECK(cat.value_at(4) == doctest::Approx(5.0));
}

TEST_CASE("feature addition merges sorted entries") {
  FeatureVector a{4, {{0, 1.0}, {2, 2.0}}};
  FeatureVector b{4, {{2, 3.0}, {3, 4.0}}};
  const FeatureVector sum = add_features(a, b);
  CHECK(sum.dim == 4);
  REQUIRE(sum.entries.size() == 3);
  CHECK(sum.entries[0] == std::pair<int, double>{0, 1.0});
  CHECK(sum.entries[1] == std::pair<int, double>{2, 5.0});
  CHECK(sum.entries[2] == std::pair<int, double>{3, 4.0});

  FeatureVector wrong{5, {}};
  CHECK_THROWS_AS(add_features(a, wrong), Error);
}
