#include "bifleet/corpus.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "bifleet/common.hpp"

namespace bifleet {

using nlohmann::json;

const char* domain_name(Domain d) {
  return d == Domain::kSource ? "source" : "target";
}

Domain parse_domain(const std::string& name) {
  if (name == "source") return Domain::kSource;
  if (name == "target") return Domain::kTarget;
  throw ValidationError("unknown domain: '" + name + "' (expected source|target)");
}

void Sentence::validate() const {
  if (tokens.empty() || static_cast<int>(tokens.size()) > kMaxSentenceTokens) {
    throw ValidationError(cat("sentence length ", tokens.size(), " outside [1, ",
                              kMaxSentenceTokens, "]"));
  }
  if (clause_type.empty()) throw ValidationError("sentence has empty clause_type");
  const int n = length();
  std::vector<ElementSpan> sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const ElementSpan& a, const ElementSpan& b) { return a.start < b.start; });
  int prev_end = -1;
  for (const auto& s : sorted) {
    if (s.start < 0 || s.end < s.start || s.end >= n) {
      throw ValidationError(cat("span [", s.start, ", ", s.end, "] invalid for sentence of ",
                                n, " tokens"));
    }
    if (s.element_type.empty() || s.element_type == "O") {
      throw ValidationError("span has invalid element type '" + s.element_type + "'");
    }
    if (s.start <= prev_end) {
      throw ValidationError(cat("overlapping spans at token ", s.start));
    }
    prev_end = s.end;
  }
}

std::vector<ClauseGroup> group_clauses(const Corpus& corpus) {
  std::vector<ClauseGroup> groups;
  for (size_t i = 0; i < corpus.sentences.size(); ++i) {
    const Sentence& s = corpus.sentences[i];
    bool extend = false;
    if (!groups.empty() && i > 0) {
      const Sentence& prev = corpus.sentences[i - 1];
      extend = prev.clause_type == s.clause_type && prev.domain == s.domain &&
               prev.doc_id == s.doc_id && prev.clause_id == s.clause_id;
    }
    if (!extend) {
      groups.push_back(ClauseGroup{s.clause_type, {}});
    }
    groups.back().sentence_indices.push_back(i);
  }
  return groups;
}

std::vector<std::string> encode_bio(const Sentence& sentence) {
  std::vector<std::string> tags(sentence.tokens.size(), "O");
  for (const auto& span : sentence.spans) {
    tags[static_cast<size_t>(span.start)] = "B-" + span.element_type;
    for (int i = span.start + 1; i <= span.end; ++i) {
      tags[static_cast<size_t>(i)] = "I-" + span.element_type;
    }
  }
  return tags;
}

std::vector<ElementSpan> decode_bio(const std::vector<std::string>& tags) {
  std::vector<ElementSpan> spans;
  for (size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") continue;
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) {
      throw ValidationError("malformed BIO tag '" + tag + "'");
    }
    const std::string type = tag.substr(2);
    const bool continues = tag[0] == 'I' && !spans.empty() &&
                           spans.back().element_type == type &&
                           spans.back().end == static_cast<int>(i) - 1;
    if (continues) {
      spans.back().end = static_cast<int>(i);
    } else {
      spans.push_back(ElementSpan{static_cast<int>(i), static_cast<int>(i), type});
    }
  }
  return spans;
}

namespace {
Sentence sentence_from_json(const json& j) {
  Sentence s;
  if (!j.is_object()) throw ParseError("line is not a JSON object");
  if (!j.contains("tokens") || !j["tokens"].is_array()) {
    throw ParseError("missing or non-array 'tokens'");
  }
  for (const auto& t : j["tokens"]) s.tokens.push_back(t.get<std::string>());
  s.clause_type = j.at("clause_type").get<std::string>();
  s.domain = parse_domain(j.at("domain").get<std::string>());
  if (j.contains("spans")) {
    for (const auto& sp : j["spans"]) {
      ElementSpan span;
      span.start = sp.at("start").get<int>();
      span.end = sp.at("end").get<int>();
      span.element_type = sp.at("type").get<std::string>();
      s.spans.push_back(span);
    }
  }
  if (j.contains("doc_id")) s.doc_id = j["doc_id"].get<std::string>();
  if (j.contains("clause_id")) s.clause_id = j["clause_id"].get<std::string>();
  std::sort(s.spans.begin(), s.spans.end(),
            [](const ElementSpan& a, const ElementSpan& b) { return a.start < b.start; });
  s.validate();
  return s;
}
}  // namespace

Corpus load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(cat(path, ":", lineno, ": invalid JSON: ", e.what()));
    }
    try {
      corpus.sentences.push_back(sentence_from_json(j));
    } catch (const std::exception& e) {
      throw ValidationError(cat(path, ":", lineno, ": ", e.what()));
    }
  }
  if (corpus.empty()) log_warn("corpus file ", path, " contains no sentences");
  return corpus;
}

std::string sentence_to_json(const Sentence& s) {
  json j;
  j["tokens"] = s.tokens;
  j["clause_type"] = s.clause_type;
  json spans = json::array();
  for (const auto& span : s.spans) {
    spans.push_back({{"start", span.start}, {"end", span.end}, {"type", span.element_type}});
  }
  j["spans"] = spans;
  j["domain"] = domain_name(s.domain);
  if (s.doc_id) j["doc_id"] = *s.doc_id;
  if (s.clause_id) j["clause_id"] = *s.clause_id;
  return j.dump();
}

void save_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& s : corpus.sentences) out << sentence_to_json(s) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace bifleet
