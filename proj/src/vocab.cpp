#include "bifleet/vocab.hpp"

#include "bifleet/common.hpp"

namespace bifleet {

int Vocabulary::word_id(const std::string& word) const {
  auto it = word_ids_.find(word);
  return it == word_ids_.end() ? kUnk : it->second;
}

int Vocabulary::char_id(char c) const {
  auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kUnk : it->second;
}

void Vocabulary::rebuild_maps() {
  word_ids_.clear();
  for (size_t i = 2; i < words_.size(); ++i) word_ids_[words_[i]] = static_cast<int>(i);
  char_ids_.clear();
  for (size_t i = 2; i < chars_.size(); ++i) char_ids_[chars_[i]] = static_cast<int>(i);
}

Vocabulary Vocabulary::from_lists(std::vector<std::string> words, std::string chars) {
  Vocabulary v;
  v.words_ = std::move(words);
  v.chars_ = std::move(chars);
  if (v.words_.size() < 2 || v.chars_.size() < 2) {
    throw ValidationError("vocabulary lists must include PAD and UNK entries");
  }
  v.rebuild_maps();
  return v;
}

Vocabulary build_vocab(const std::vector<const Corpus*>& corpora, int min_freq) {
  if (corpora.empty()) throw ContractViolation("build_vocab over zero corpora");

  // First-occurrence order keeps id assignment stable across reruns.
  std::vector<std::string> order;
  std::unordered_map<std::string, int> freq;
  std::vector<char> char_order;
  std::unordered_map<char, bool> char_seen;
  for (const Corpus* corpus : corpora) {
    for (const auto& sentence : corpus->sentences) {
      for (const auto& token : sentence.tokens) {
        auto [it, fresh] = freq.try_emplace(token, 0);
        if (fresh) order.push_back(token);
        ++it->second;
        for (char c : token) {
          if (!char_seen[c]) {
            char_seen[c] = true;
            char_order.push_back(c);
          }
        }
      }
    }
  }

  Vocabulary v;
  v.words_ = {"<pad>", "<unk>"};
  for (const auto& w : order) {
    if (freq[w] >= min_freq) v.words_.push_back(w);
  }
  v.chars_ = std::string("\0\x01", 2);  // placeholders for PAD/UNK slots
  for (char c : char_order) v.chars_.push_back(c);
  v.rebuild_maps();
  return v;
}

}  // namespace bifleet
