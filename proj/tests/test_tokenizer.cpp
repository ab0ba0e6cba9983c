#include <doctest.h>

#include <filesystem>

#include "cycleform/tokenizer.hpp"

using namespace cycleform;
using namespace cycleform::tokenizer;
using corpus::Example;

namespace {

Example make_ex(std::string nl, std::string formal) {
  Example e;
  e.id = "t" + std::to_string(nl.size() * 131 + formal.size());
  e.nl = std::move(nl);
  e.formal = std::move(formal);
  e.difficulty = 1;
  e.domain = "logic";
  return e;
}

}  // namespace

TEST_CASE("vocab covers both fields with sorted ids after specials") {
  auto v = build_vocab({make_ex("ab", "ba")});
  CHECK(v.chars.size() == 2);
  CHECK(v.size() == 7);
  CHECK(v.id_of('a') == 5);
  CHECK(v.id_of('b') == 6);
  CHECK(v.id_of('z') == kUnk);
  // Reordered corpus gives the identical vocabulary.
  auto v2 = build_vocab({make_ex("ba", "ab")});
  CHECK(v2.chars == v.chars);
}

TEST_CASE("multi-byte characters are single entries") {
  auto v = build_vocab({make_ex("\xE2\x88\x80x", "x")});  // forall quantifier
  CHECK(v.chars.size() == 2);
  CHECK(v.id_of('x') == 5);      // codepoint order: 'x' (120) first
  CHECK(v.id_of(0x2200) == 6);   // the quantifier sign (8704) second
  auto ids = encode("\xE2\x88\x80x", v);
  std::vector<int> want = {kBos, 6, 5, kEos};
  CHECK(ids == want);
  CHECK(decode(ids, v) == "\xE2\x88\x80x");
}

TEST_CASE("encode frames with BOS/EOS and round-trips through decode") {
  auto v = build_vocab({make_ex("for all x, x = x.", "thm : x = x")});
  std::string text = "x = x, for all";
  auto ids = encode(text, v);
  REQUIRE(ids.size() == text.size() + 2);
  CHECK(ids.front() == kBos);
  CHECK(ids.back() == kEos);
  CHECK(decode(ids, v) == text);
  auto empty = encode("", v);
  CHECK(empty == std::vector<int>{kBos, kEos});
}

TEST_CASE("unknown characters become UNK and vanish on decode") {
  auto v = build_vocab({make_ex("ab", "ab")});
  auto ids = encode("aQb", v);
  std::vector<int> want = {kBos, 5, kUnk, 6, kEos};
  CHECK(ids == want);
  CHECK(decode(ids, v) == "ab");
}

TEST_CASE("truncation clamps to max_len and forces a final EOS") {
  auto v = build_vocab({make_ex("a", "a")});
  std::string long_text(1000, 'a');
  auto ids = encode(long_text, v, 512);
  REQUIRE(ids.size() == 512);
  CHECK(ids.front() == kBos);
  CHECK(ids.back() == kEos);
  for (std::size_t i = 1; i + 1 < ids.size(); ++i) CHECK(ids[i] == 5);
  // Exactly-fitting text is untouched.
  auto snug = encode(std::string(510, 'a'), v, 512);
  CHECK(snug.size() == 512);
  CHECK(snug.back() == kEos);
  CHECK(snug[510] == 5);
  // One char over: still 512, EOS replaces the last character.
  auto over = encode(std::string(511, 'a'), v, 512);
  CHECK(over.size() == 512);
  CHECK(over.back() == kEos);
}

TEST_CASE("round trip holds across a generated corpus") {
  corpus::GenPlan plan;
  plan.per_difficulty = 15;
  plan.max_difficulty = 8;
  auto corp = corpus::generate_corpus(plan, 21);
  auto v = build_vocab(corp);
  for (const auto& ex : corp) {
    CHECK(decode(encode(ex.nl, v), v) == ex.nl);
    CHECK(decode(encode(ex.formal, v), v) == ex.formal);
  }
}

TEST_CASE("vocab json persistence round trip") {
  auto v = build_vocab({make_ex("ab\xE2\x88\x80", "xy")}, 256);
  auto path = (std::filesystem::temp_directory_path() / "cycleform_vocab.json")
                  .string();
  save_vocab(path, v);
  auto w = load_vocab(path);
  CHECK(w.chars == v.chars);
  CHECK(w.max_len == 256);
  CHECK(w.id_of('x') == v.id_of('x'));
  std::filesystem::remove(path);
}

TEST_CASE("vocab loader rejects malformed files") {
  auto dir = std::filesystem::temp_directory_path();
  auto path = (dir / "cycleform_vocab_bad.json").string();
  write_text_file(path, "{\"chars\": [\"ab\"], \"max_len\": 512}");
  CHECK_THROWS_AS(load_vocab(path), DataError);
  write_text_file(path, "{\"chars\": [\"b\", \"a\"], \"max_len\": 512}");
  CHECK_THROWS_AS(load_vocab(path), DataError);
  write_text_file(path, "{\"chars\": [\"a\", \"a\"], \"max_len\": 512}");
  CHECK_THROWS_AS(load_vocab(path), DataError);
  write_text_file(path, "not json");
  CHECK_THROWS_AS(load_vocab(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(build_vocab({}), ConfigError);
}
