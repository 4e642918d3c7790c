#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dispute {

struct Corpus;
struct Conversation;
struct Utterance;

// Lowercases and splits on whitespace and punctuation boundaries. The input
// is treated as UTF-8: multi-byte sequences are never split mid-character,
// and common Unicode space/punctuation codepoints count as boundaries.
// Punctuation characters are kept as single-character tokens.
std::vector<std::string> tokenize(std::string_view text);

// Token inventory built from training text only. Index 0 is the unknown
// token; real tokens occupy 1..size()-1, most frequent first.
class Vocab {
 public:
  static constexpr int kUnkIndex = 0;

  Vocab() = default;
  Vocab(std::vector<std::string> tokens, long min_freq, long max_size);

  int size() const { return static_cast<int>(tokens_.size()) + 1; }
  int lookup(const std::string& token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  long min_freq() const { return min_freq_; }
  long max_size() const { return max_size_; }

  std::string to_json_string() const;
  static Vocab from_json_string(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& o) const {
    return tokens_ == o.tokens_ && min_freq_ == o.min_freq_ && max_size_ == o.max_size_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  long min_freq_ = 2;
  long max_size_ = 10000;
};

Vocab build_vocab(const Corpus& train, long min_freq = 2, long max_size = 10000);

// Sparse non-negative feature vector; entries sorted by index.
struct FeatureVector {
  int dim = 0;
  std::vector<std::pair<int, double>> entries;

  double value_at(int index) const;
  bool operator==(const FeatureVector&) const = default;
};

FeatureVector bow_vector(std::string_view text, const Vocab& vocab, bool binary = false);
FeatureVector bow_vector(const Utterance& utt, const Vocab& vocab, bool binary = false);

// Bag of words over all utterances strictly before `index`; the zero vector
// at index 0. Token counts add across utterances.
FeatureVector context_vector(const Conversation& conv, int index, const Vocab& vocab,
                             bool binary = false);

// Concatenation: b's indices are shifted by a.dim.
FeatureVector concat_features(const FeatureVector& a, const FeatureVector& b);

FeatureVector add_features(const FeatureVector& a, const FeatureVector& b);

}  // namespace dispute
