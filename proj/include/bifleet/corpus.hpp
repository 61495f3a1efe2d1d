#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bifleet {

enum class Domain { kSource, kTarget };

const char* domain_name(Domain d);
Domain parse_domain(const std::string& name);

// A typed span of consecutive tokens inside one sentence; both ends inclusive.
struct ElementSpan {
  int start = 0;
  int end = 0;
  std::string element_type;

  bool operator==(const ElementSpan&) const = default;
};

constexpr int kMaxSentenceTokens = 100;

struct Sentence {
  std::vector<std::string> tokens;
  std::string clause_type;
  std::vector<ElementSpan> spans;  // kept sorted by start; non-overlapping
  Domain domain = Domain::kSource;
  // Sentences sharing (doc_id, clause_id) in one contiguous run form a clause.
  std::optional<std::string> doc_id;
  std::optional<std::string> clause_id;

  int length() const { return static_cast<int>(tokens.size()); }
  bool is_pos() const { return !spans.empty(); }

  // Enforces the sentence invariants; throws ValidationError on violation.
  void validate() const;
};

struct Corpus {
  std::vector<Sentence> sentences;

  size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

// A clause: a maximal run of consecutive sentences sharing clause_type (and
// doc/clause ids when present). Indices into the owning corpus.
struct ClauseGroup {
  std::string clause_type;
  std::vector<size_t> sentence_indices;
};

std::vector<ClauseGroup> group_clauses(const Corpus& corpus);

// --- BIO codec -------------------------------------------------------------

// B-t at span starts, I-t inside, O elsewhere.
std::vector<std::string> encode_bio(const Sentence& sentence);
// Inverse of encode_bio. A stray I-t (after O or a different type) opens a
// new span — conventional BIO repair; encode_bio never produces that shape.
std::vector<ElementSpan> decode_bio(const std::vector<std::string>& tags);

// --- JSONL I/O ---------------------------------------------------------------

// One JSON object per line: {"tokens": [...], "clause_type": "...",
// "spans": [{"start":..,"end":..,"type":".."}], "domain": "source"|"target",
// "doc_id"?: "...", "clause_id"?: "..."}.
Corpus load_jsonl(const std::string& path);
void save_jsonl(const Corpus& corpus, const std::string& path);
std::string sentence_to_json(const Sentence& s);

}  // namespace bifleet
