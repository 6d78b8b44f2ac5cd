#include <fstream>
#include <sstream>

#include "doctest.h"
#include "geotext/error.hpp"
#include "geotext/rng.hpp"
#include "geotext/synth.hpp"
#include "geotext/vocab.hpp"

using namespace geotext;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Vocabulary small_vocab(std::vector<std::string> extra) {
  std::vector<std::string> t{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (auto& e : extra) t.push_back(std::move(e));
  return Vocabulary(std::move(t));
}

std::vector<std::string> ids_to_tokens(const Vocabulary& v, const std::vector<std::uint32_t>& ids) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST_CASE("greedy longest match") {
  std::vector<std::string> toks{"un", "##aff", "##able", "##a", "##f", "##b", "##l", "##e", "##n", "u", "a", "f", "b", "l",
                                "e", "n"};
  const Vocabulary v = small_vocab(toks);
  CHECK(ids_to_tokens(v, tokenize_word(v, "unaffable")) == std::vector<std::string>{"un", "##aff", "##able"});
  CHECK(ids_to_tokens(v, tokenize_word(v, "un")) == std::vector<std::string>{"un"});
  // 'z' has no piece: the whole word collapses to [UNK].
  CHECK(tokenize_word(v, "unzable") == std::vector<std::uint32_t>{v.unk_id()});
  // Case folding happens before lookup.
  CHECK(ids_to_tokens(v, tokenize_word(v, "UnAff")) == std::vector<std::string>{"un", "##aff"});
}

TEST_CASE("build_vocab golden files") {
  std::vector<std::string> aa(10, "aa");
  const Vocabulary v = build_vocab(aa, 10);
  CHECK(v.find("a"));
  CHECK((v.find("##a") || v.find("aa")));
  CHECK(v.to_text() == slurp(GEOTEXT_TEST_DATA "/vocab_aa.txt"));

  const auto docs = synth::gen_forms(20, 5);
  const auto words = synth::corpus_words(docs);
  const Vocabulary big = build_vocab(words, 256);
  CHECK(big.to_text() == slurp(GEOTEXT_TEST_DATA "/vocab_forms.txt"));
  CHECK(build_vocab(words, 256) == big);
  CHECK(Vocabulary::from_text(big.to_text()) == big);
}

TEST_CASE("build_vocab contracts") {
  std::vector<std::string> none;
  CHECK_THROWS_AS(build_vocab(none, 100), ContractError);
  std::vector<std::string> abc{"abc"};
  // 5 specials + 3 characters in two forms.
  CHECK_THROWS_AS(build_vocab(abc, 8), ContractError);
  CHECK_THROWS(Vocabulary::from_text("[PAD]\r\n[UNK]\n"));
  CHECK_THROWS(Vocabulary(std::vector<std::string>{"[UNK]", "[PAD]", "[CLS]", "[SEP]", "[MASK]"}));
}

TEST_CASE("detokenized pieces reconstruct the word") {
  const auto docs = synth::gen_forms(10, 9);
  const auto words = synth::corpus_words(docs);
  const Vocabulary v = build_vocab(words, 90);
  Rng rng(3);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    std::string w;
    const auto len = rng.range(1, 12);
    for (long k = 0; k < len; ++k) w += alphabet[rng.below(alphabet.size())];
    const auto ids = tokenize_word(v, w);
    if (ids.size() == 1 && ids[0] == v.unk_id()) continue;
    std::string joined;
    for (auto id : ids) {
      std::string t = v.token(id);
      if (t.rfind("##", 0) == 0) t = t.substr(2);
      joined += t;
    }
    CHECK(joined == w);
    ++checked;
  }
  CHECK(checked > 500);
}

TEST_CASE("encode_document layout") {
  std::vector<std::string> toks{"un", "##aff", "##able", "cat", "u", "c", "a", "t", "##a", "##t"};
  const Vocabulary v = small_vocab(toks);

  const TokenSequence empty = encode_document(v, {}, 6);
  CHECK(empty.ids == std::vector<std::uint32_t>{v.cls_id(), v.sep_id(), 0, 0, 0, 0});
  CHECK(empty.mask == std::vector<std::uint8_t>{1, 1, 0, 0, 0, 0});

  const BBox box{10, 20, 30, 40};
  const std::vector<Word> one{{"unaffable", box}};
  const TokenSequence s = encode_document(v, one, 8);
  CHECK(s.real_length() == 5);
  for (std::size_t i = 1; i <= 3; ++i) CHECK(s.bboxes[i] == box);
  CHECK(s.bboxes[0] == BBox{0, 0, 1000, 1000});
  CHECK(s.bboxes[4] == BBox{0, 0, 0, 0});
  CHECK(s.bboxes[7] == BBox{0, 0, 0, 0});
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(s.positions[i] == i);
    CHECK(s.segments[i] == 0);
  }
  CHECK(s.word_ids == std::vector<std::int32_t>{-1, 0, 0, 0, -1, -1, -1, -1});

  // Truncation arithmetic: [CLS] + first max_len-2 pieces + [SEP].
  std::vector<Word> many;
  for (int i = 0; i < 10; ++i) many.push_back({i % 2 ? "cat" : "unaffable", box});
  for (std::size_t max_len = 2; max_len <= 30; ++max_len) {
    const TokenSequence t = encode_document(v, many, max_len);
    const std::size_t pieces = 5 * 3 + 5;
    const std::size_t expect_real = std::min(pieces, max_len - 2) + 2;
    CHECK(t.ids.size() == max_len);
    CHECK(t.real_length() == expect_real);
    CHECK(t.ids[expect_real - 1] == v.sep_id());
    CHECK_NOTHROW(t.validate(v.pad_id()));
  }
  CHECK_THROWS_AS(encode_document(v, many, 1), ContractError);
}
