#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unistd.h>

#include "bifleet/common.hpp"
#include "bifleet/corpus.hpp"
#include "bifleet/generator.hpp"
#include "bifleet/rng.hpp"
#include "bifleet/vocab.hpp"

using namespace bifleet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() / ("bifleet_corpus_test_" + std::to_string(::getpid()) +
                                            "_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

Sentence make_sentence(std::vector<std::string> tokens, std::string clause,
                       std::vector<ElementSpan> spans, Domain d = Domain::kSource) {
  Sentence s;
  s.tokens = std::move(tokens);
  s.clause_type = std::move(clause);
  s.spans = std::move(spans);
  s.domain = d;
  return s;
}

}  // namespace

TEST_CASE("load_jsonl parses the schema example") {
  auto dir = temp_dir();
  auto path = (dir / "one.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"tokens":["pay","10%"],"clause_type":"indemnity",)"
        << R"("spans":[{"start":1,"end":1,"type":"compensation_ratio"}],"domain":"target"})"
        << "\n";
  }
  Corpus c = load_jsonl(path);
  REQUIRE(c.size() == 1);
  const Sentence& s = c.sentences[0];
  CHECK(s.tokens == std::vector<std::string>{"pay", "10%"});
  CHECK(s.clause_type == "indemnity");
  REQUIRE(s.spans.size() == 1);
  CHECK(s.spans[0] == ElementSpan{1, 1, "compensation_ratio"});
  CHECK(s.domain == Domain::kTarget);
}

TEST_CASE("load_jsonl: empty file gives empty corpus") {
  auto dir = temp_dir();
  auto path = (dir / "empty.jsonl").string();
  std::ofstream(path).close();
  Corpus c = load_jsonl(path);
  CHECK(c.empty());
}

TEST_CASE("load_jsonl rejects invalid spans and malformed lines with line numbers") {
  auto dir = temp_dir();
  {
    auto path = (dir / "bad_span.jsonl").string();
    std::ofstream out(path);
    out << R"({"tokens":["a","b"],"clause_type":"x",)"
        << R"("spans":[{"start":1,"end":0,"type":"t"}],"domain":"source"})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_jsonl(path), ValidationError);
  }
  {
    auto path = (dir / "overlap.jsonl").string();
    std::ofstream out(path);
    out << R"({"tokens":["a","b","c"],"clause_type":"x","spans":)"
        << R"([{"start":0,"end":1,"type":"t"},{"start":1,"end":2,"type":"u"}],)"
        << R"("domain":"source"})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_jsonl(path), ValidationError);
  }
  {
    auto path = (dir / "garbage.jsonl").string();
    std::ofstream out(path);
    out << "{\"tokens\": [\"ok\"], \"clause_type\": \"x\", \"domain\": \"source\"}\n";
    out << "not json at all\n";
    out.close();
    try {
      load_jsonl(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
}

TEST_CASE("sentence validation enforces the length cap") {
  Sentence s = make_sentence(std::vector<std::string>(101, "w"), "c", {});
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.tokens.clear();
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("encode_bio basic shapes") {
  Sentence s = make_sentence({"a", "b", "c"}, "c", {{1, 2, "T"}});
  CHECK(encode_bio(s) == std::vector<std::string>{"O", "B-T", "I-T"});

  Sentence neg = make_sentence({"a", "b"}, "c", {});
  CHECK(encode_bio(neg) == std::vector<std::string>{"O", "O"});
}

TEST_CASE("BIO round-trip is identity on 1000 random sentences") {
  Rng rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const int len = rng.uniform_int(1, 30);
    Sentence s;
    s.clause_type = "c";
    for (int i = 0; i < len; ++i) s.tokens.push_back("w" + std::to_string(i));
    int cursor = 0;
    while (cursor < len) {
      if (rng.bernoulli(0.35)) {
        const int span_len = rng.uniform_int(1, std::min(4, len - cursor));
        s.spans.push_back(ElementSpan{cursor, cursor + span_len - 1,
                                      "t" + std::to_string(rng.uniform_int(0, 5))});
        cursor += span_len;
      } else {
        ++cursor;
      }
    }
    s.validate();
    CHECK(decode_bio(encode_bio(s)) == s.spans);
  }
}

TEST_CASE("group_clauses honors clause_id and contiguity") {
  Corpus c;
  auto s1 = make_sentence({"a"}, "pay", {});
  s1.clause_id = "c1";
  auto s2 = make_sentence({"b"}, "pay", {});
  s2.clause_id = "c1";
  auto s3 = make_sentence({"d"}, "pay", {});
  s3.clause_id = "c2";
  auto s4 = make_sentence({"e"}, "deposit", {});
  s4.clause_id = "c2";
  c.sentences = {s1, s2, s3, s4};
  auto groups = group_clauses(c);
  REQUIRE(groups.size() == 3);  // c1(pay, 2 sents), c2(pay), c2(deposit)
  CHECK(groups[0].sentence_indices.size() == 2);
  CHECK(groups[1].clause_type == "pay");
  CHECK(groups[2].clause_type == "deposit");
}

TEST_CASE("build_vocab: min_freq and UNK behavior") {
  Corpus c;
  c.sentences.push_back(make_sentence({"a", "a", "b"}, "x", {}));
  Vocabulary v2 = build_vocab({&c}, 2);
  CHECK(v2.word_id("a") > Vocabulary::kUnk);
  CHECK(v2.word_id("b") == Vocabulary::kUnk);
  CHECK(v2.word_id("zzz") == Vocabulary::kUnk);

  Vocabulary v1 = build_vocab({&c}, 1);
  CHECK(v1.word_id("a") != Vocabulary::kUnk);
  CHECK(v1.word_id("b") != Vocabulary::kUnk);

  // Stable id assignment across reruns on identical input order.
  Vocabulary v1b = build_vocab({&c}, 1);
  CHECK(v1.word_id("a") == v1b.word_id("a"));
  CHECK(v1.word_id("b") == v1b.word_id("b"));
  CHECK(v1.words() == v1b.words());
}

TEST_CASE("generator: default config matches the published type counts") {
  GenConfig cfg;
  // Keep the default type geometry but shrink sample counts for speed.
  cfg.train_src = 300;
  cfg.valid_src = 40;
  cfg.test_src = 40;
  cfg.train_tgt = 200;
  cfg.valid_tgt = 30;
  cfg.test_tgt = 30;
  SyntheticData data = generate_synthetic(cfg, 7);
  CHECK(data.source_recipe.clause_types.size() == 18);
  CHECK(data.target_recipe.clause_types.size() == 17);
  CHECK(data.source_recipe.element_types.size() == 70);
  CHECK(data.target_recipe.element_types.size() == 79);
  CHECK(data.source_train.size() == 300);
  CHECK(data.target_train.size() == 200);

  // Every span's type is a planted rule of its clause type.
  std::set<std::pair<std::string, std::string>> rule_set;
  for (const auto& r : data.rules) {
    if (r.domain == Domain::kSource) rule_set.insert({r.clause_type, r.element_type});
  }
  for (const auto& s : data.source_train.sentences) {
    for (const auto& span : s.spans) {
      CHECK(rule_set.count({s.clause_type, span.element_type}) == 1);
    }
  }
}

TEST_CASE("generator: full sharing and overlap give identical domain distributions") {
  GenConfig cfg;
  cfg.clause_types_src = 6;
  cfg.clause_types_tgt = 6;
  cfg.shared_clause_types = 6;
  cfg.element_types_src = 12;
  cfg.element_types_tgt = 12;
  cfg.shared_element_types = 12;
  cfg.vocab_size = 400;
  cfg.vocab_overlap = 1.0;
  cfg.train_src = 50;
  cfg.valid_src = 10;
  cfg.test_src = 10;
  cfg.train_tgt = 50;
  cfg.valid_tgt = 10;
  cfg.test_tgt = 10;
  SyntheticData data = generate_synthetic(cfg, 3);
  CHECK(data.source_recipe == data.target_recipe);
}

TEST_CASE("generator: planted exclusivity makes f_et_ct equal f_et") {
  GenConfig cfg;
  cfg.clause_types_src = 4;
  cfg.clause_types_tgt = 4;
  cfg.shared_clause_types = 2;
  cfg.element_types_src = 8;
  cfg.element_types_tgt = 8;
  cfg.shared_element_types = 4;
  cfg.vocab_size = 300;
  cfg.train_src = 400;
  cfg.valid_src = 10;
  cfg.test_src = 10;
  cfg.train_tgt = 400;
  cfg.valid_tgt = 10;
  cfg.test_tgt = 10;
  SyntheticData data = generate_synthetic(cfg, 11);

  // Count over the generated corpus: every occurrence of an element type must
  // fall inside its home clause type.
  std::map<std::string, std::string> home;
  for (const auto& r : data.rules) {
    if (r.domain == Domain::kSource) home[r.element_type] = r.clause_type;
  }
  std::map<std::string, int> f_et, f_et_home;
  for (const auto& s : data.source_train.sentences) {
    std::set<std::string> seen;
    for (const auto& span : s.spans) seen.insert(span.element_type);
    for (const auto& et : seen) {
      ++f_et[et];
      if (home[et] == s.clause_type) ++f_et_home[et];
    }
  }
  REQUIRE(!f_et.empty());
  for (const auto& [et, n] : f_et) CHECK(f_et_home[et] == n);
}

TEST_CASE("generator: deterministic for a given seed, byte-identical JSONL") {
  GenConfig cfg;
  cfg.clause_types_src = 5;
  cfg.clause_types_tgt = 5;
  cfg.shared_clause_types = 3;
  cfg.element_types_src = 10;
  cfg.element_types_tgt = 10;
  cfg.shared_element_types = 5;
  cfg.vocab_size = 300;
  cfg.train_src = 60;
  cfg.valid_src = 8;
  cfg.test_src = 8;
  cfg.train_tgt = 60;
  cfg.valid_tgt = 8;
  cfg.test_tgt = 8;

  auto dir1 = temp_dir();
  auto dir2 = temp_dir();
  write_synthetic(generate_synthetic(cfg, 99), dir1.string());
  write_synthetic(generate_synthetic(cfg, 99), dir2.string());
  for (const char* name :
       {"source_train.jsonl", "source_valid.jsonl", "source_test.jsonl", "target_train.jsonl",
        "target_valid.jsonl", "target_test.jsonl", "rules.json"}) {
    std::ifstream a(dir1 / name), b(dir2 / name);
    std::string ta((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string tb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(ta == tb);
    CHECK(!ta.empty());
  }

  // Different seed changes the sample.
  auto dir3 = temp_dir();
  write_synthetic(generate_synthetic(cfg, 100), dir3.string());
  std::ifstream a(dir1 / "source_train.jsonl"), b(dir3 / "source_train.jsonl");
  std::string ta((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string tb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(ta != tb);
}

TEST_CASE("generator rejects infeasible configs") {
  GenConfig cfg;
  cfg.shared_clause_types = cfg.clause_types_tgt + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  GenConfig small;
  small.vocab_size = 10;
  CHECK_THROWS_AS(small.validate(), ConfigError);
}

TEST_CASE("generated corpora round-trip through JSONL") {
  GenConfig cfg;
  cfg.clause_types_src = 4;
  cfg.clause_types_tgt = 4;
  cfg.shared_clause_types = 2;
  cfg.element_types_src = 8;
  cfg.element_types_tgt = 8;
  cfg.shared_element_types = 4;
  cfg.vocab_size = 300;
  cfg.train_src = 40;
  cfg.valid_src = 5;
  cfg.test_src = 5;
  cfg.train_tgt = 40;
  cfg.valid_tgt = 5;
  cfg.test_tgt = 5;
  SyntheticData data = generate_synthetic(cfg, 5);
  auto dir = temp_dir();
  write_synthetic(data, dir.string());
  Corpus loaded = load_jsonl((dir / "target_train.jsonl").string());
  REQUIRE(loaded.size() == data.target_train.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.sentences[i].tokens == data.target_train.sentences[i].tokens);
    CHECK(loaded.sentences[i].spans == data.target_train.sentences[i].spans);
    CHECK(loaded.sentences[i].clause_type == data.target_train.sentences[i].clause_type);
  }
}
