#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "bifleet/corpus.hpp"

namespace bifleet {

// Word and character lookup tables shared by both domains.
// Id 0 is PAD (reserved, never produced by lookup), id 1 is UNK.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  int word_id(const std::string& word) const;
  int char_id(char c) const;
  int word_count() const { return static_cast<int>(words_.size()); }
  int char_count() const { return static_cast<int>(chars_.size()); }

  const std::vector<std::string>& words() const { return words_; }
  const std::string& charset() const { return chars_; }

  // Reconstruction from serialized form (checkpoint).
  static Vocabulary from_lists(std::vector<std::string> words, std::string chars);

  friend Vocabulary build_vocab(const std::vector<const Corpus*>& corpora, int min_freq);

 private:
  std::vector<std::string> words_;  // index = id; [0]="<pad>", [1]="<unk>"
  std::string chars_;               // chars_[id] for id >= 2 meaningless at 0/1
  std::unordered_map<std::string, int> word_ids_;
  std::unordered_map<char, int> char_ids_;
  void rebuild_maps();
};

// Single vocabulary over all corpora; words below min_freq map to UNK.
// Insertion order follows first occurrence, so identical input order gives
// identical id assignment.
Vocabulary build_vocab(const std::vector<const Corpus*>& corpora, int min_freq);

}  // namespace bifleet
