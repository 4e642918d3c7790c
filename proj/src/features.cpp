#include "dispute/features.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "dispute/corpus.hpp"
#include "dispute/error.hpp"
#include "dispute/util.hpp"

namespace dispute {

using nlohmann::json;

namespace {

bool is_space_cp(char32_t cp) {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\r':
    case 0x0B:
    case 0x0C:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return (cp >= 0x2000 && cp <= 0x200A);
  }
}

bool is_punct_cp(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  if (cp == 0xA1 || cp == 0xAB || cp == 0xBB || cp == 0xBF) return true;  // ¡ « » ¿
  if (cp >= 0x2010 && cp <= 0x2027) return true;  // dashes, quotes, daggers
  if (cp >= 0x2030 && cp <= 0x205E) return true;  // permille..general punct
  if (cp >= 0x3001 && cp <= 0x303F) return true;  // CJK punctuation
  return false;
}

char32_t lower_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  // Latin-1 uppercase block, skipping the multiplication sign.
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Decodes the next UTF-8 codepoint; malformed bytes decode as themselves so
// arbitrary binary input cannot make tokenization fail.
char32_t next_cp(std::string_view text, std::size_t& pos) {
  unsigned char c = static_cast<unsigned char>(text[pos]);
  if (c < 0x80) {
    ++pos;
    return c;
  }
  int extra = 0;
  char32_t cp = 0;
  if ((c & 0xE0) == 0xC0) {
    extra = 1;
    cp = c & 0x1F;
  } else if ((c & 0xF0) == 0xE0) {
    extra = 2;
    cp = c & 0x0F;
  } else if ((c & 0xF8) == 0xF0) {
    extra = 3;
    cp = c & 0x07;
  } else {
    ++pos;
    return c;
  }
  if (pos + extra >= text.size()) {  // truncated sequence
    ++pos;
    return c;
  }
  for (int i = 1; i <= extra; ++i) {
    unsigned char cc = static_cast<unsigned char>(text[pos + i]);
    if ((cc & 0xC0) != 0x80) {
      ++pos;
      return c;
    }
    cp = (cp << 6) | (cc & 0x3F);
  }
  pos += 1 + extra;
  return cp;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = next_cp(text, pos);
    if (is_space_cp(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else if (is_punct_cp(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
      std::string punct;
      append_utf8(punct, cp);
      tokens.push_back(std::move(punct));
    } else {
      append_utf8(current, lower_cp(cp));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocab::Vocab(std::vector<std::string> tokens, long min_freq, long max_size)
    : tokens_(std::move(tokens)), min_freq_(min_freq), max_size_(max_size) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<int>(i) + 1);
  }
}

int Vocab::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkIndex : it->second;
}

std::string Vocab::to_json_string() const {
  nlohmann::ordered_json doc;
  doc["format"] = "dispute-vocab";
  doc["min_freq"] = min_freq_;
  doc["max_size"] = max_size_;
  doc["tokens"] = tokens_;
  return doc.dump(2) + "\n";
}

Vocab Vocab::from_json_string(const std::string& text) {
  json doc = json::parse(text);
  if (!doc.contains("tokens") || !doc["tokens"].is_array())
    throw Error("vocab file missing \"tokens\" array");
  return Vocab(doc["tokens"].get<std::vector<std::string>>(),
               doc.value("min_freq", 2L), doc.value("max_size", 10000L));
}

void Vocab::save(const std::filesystem::path& path) const {
  write_file(path, to_json_string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  return from_json_string(read_file(path));
}

Vocab build_vocab(const Corpus& train, long min_freq, long max_size) {
  if (train.conversations.empty()) throw Error("build_vocab: empty corpus");
  std::map<std::string, long> counts;
  for (const Conversation& conv : train.conversations) {
    for (const Utterance& utt : conv.utterances) {
      for (std::string& tok : tokenize(utt.text)) ++counts[std::move(tok)];
    }
  }
  std::vector<std::pair<std::string, long>> items;
  items.reserve(counts.size());
  for (auto& [tok, count] : counts) {
    if (count >= min_freq) items.emplace_back(tok, count);
  }
  // Most frequent first; lexicographic tie-break (items start sorted by
  // token, so a stable sort on count preserves it).
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<long>(items.size()) > max_size) items.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(items.size());
  for (auto& [tok, count] : items) tokens.push_back(std::move(tok));
  return Vocab(std::move(tokens), min_freq, max_size);
}

double FeatureVector::value_at(int index) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), index,
                             [](const auto& e, int i) { return e.first < i; });
  if (it == entries.end() || it->first != index) return 0.0;
  return it->second;
}

FeatureVector bow_vector(std::string_view text, const Vocab& vocab, bool binary) {
  std::map<int, double> counts;
  for (const std::string& tok : tokenize(text)) {
    counts[vocab.lookup(tok)] += 1.0;
  }
  FeatureVector v;
  v.dim = vocab.size();
  v.entries.reserve(counts.size());
  for (auto [idx, count] : counts) v.entries.emplace_back(idx, binary ? 1.0 : count);
  return v;
}

FeatureVector bow_vector(const Utterance& utt, const Vocab& vocab, bool binary) {
  return bow_vector(utt.text, vocab, binary);
}

FeatureVector context_vector(const Conversation& conv, int index, const Vocab& vocab,
                             bool binary) {
  if (index < 0 || index >= static_cast<int>(conv.utterances.size()))
    throw Error("context_vector: index out of range");
  std::map<int, double> counts;
  for (int k = 0; k < index; ++k) {
    for (const std::string& tok : tokenize(conv.utterances[k].text)) {
      counts[vocab.lookup(tok)] += 1.0;
    }
  }
  FeatureVector v;
  v.dim = vocab.size();
  v.entries.reserve(counts.size());
  for (auto [idx, count] : counts) v.entries.emplace_back(idx, binary ? 1.0 : count);
  return v;
}

FeatureVector concat_features(const FeatureVector& a, const FeatureVector& b) {
  FeatureVector v;
  v.dim = a.dim + b.dim;
  v.entries = a.entries;
  v.entries.reserve(a.entries.size() + b.entries.size());
  for (auto [idx, value] : b.entries) v.entries.emplace_back(idx + a.dim, value);
  return v;
}

FeatureVector add_features(const FeatureVector& a, const FeatureVector& b) {
  if (a.dim != b.dim) throw Error("add_features: dimension mismatch");
  FeatureVector v;
  v.dim = a.dim;
  std::size_t i = 0, j = 0;
  while (i < a.entries.size() || j < b.entries.size()) {
    if (j == b.entries.size() || (i < a.entries.size() && a.entries[i].first < b.entries[j].first)) {
      v.entries.push_back(a.entries[i++]);
    } else if (i == a.entries.size() || b.entries[j].first < a.entries[i].first) {
      v.entries.push_back(b.entries[j++]);
    } else {
      v.entries.emplace_back(a.entries[i].first, a.entries[i].second + b.entries[j].second);
      ++i;
      ++j;
    }
  }
  return v;
}

}  // namespace dispute
