#include <bit>
#include <cstring>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "geotext/error.hpp"
#include "geotext/features.hpp"
#include "geotext/synth.hpp"
#include "geotext/vocab.hpp"

using namespace geotext;

namespace {

RawDocument two_words(std::uint32_t style_a, std::uint32_t style_b) {
  RawDocument d;
  d.doc_id = "doc";
  d.page_width = 500;
  d.page_height = 700;
  d.words = {RawWord{"alpha", PixelBox{10, 10, 60, 30}, style_a}, RawWord{"beta", PixelBox{10, 10, 60, 30}, style_b}};
  return d;
}

// Independent little-endian encoder for the documented feature file layout.
struct Bytes {
  std::string s;
  template <class T>
  void put(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    s.append(reinterpret_cast<const char*>(b), sizeof(T));
  }
  void seal() {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    put(h);
  }
};

Bytes header(std::uint32_t version, std::uint32_t dim, std::uint64_t count) {
  Bytes b;
  b.s.append("GTXFEAT", 7);
  b.s.push_back('\0');
  b.put(version);
  b.put(dim);
  b.put(count);
  return b;
}

void record(Bytes& b, const std::string& id, std::int64_t index, std::vector<double> v) {
  b.put(static_cast<std::uint32_t>(id.size()));
  b.s += id;
  b.put(index);
  b.put(static_cast<std::uint32_t>(v.size()));
  for (double x : v) b.put(x);
}

}  // namespace

TEST_CASE("pseudo features are deterministic and bounded") {
  const auto docs = synth::gen_forms(5, 11, synth::FormSpec{.style_rate = 0.5});
  PseudoFeatureProvider a(16), b(16);
  for (const auto& d : docs) {
    a.add(d);
    b.add(d);
  }
  for (const auto& d : docs) {
    CHECK(a.page_feature(d.doc_id) == b.page_feature(d.doc_id));
    for (std::size_t i = 0; i < d.words.size(); ++i) {
      const auto v = a.token_feature(d.doc_id, i);
      CHECK(v == b.token_feature(d.doc_id, i));
      REQUIRE(v.size() == 16);
      for (double x : v) CHECK((x >= -1.0 && x <= 1.0));
    }
    for (double x : a.page_feature(d.doc_id)) CHECK((x >= -1.0 && x <= 1.0));
  }
}

TEST_CASE("words differing only in style get different vectors") {
  const auto plain = pseudo_features(two_words(kStyleNone, kStyleNone), 8);
  const auto styled = pseudo_features(two_words(kStyleNone, kStyleBold), 8);
  CHECK(plain->token_feature("doc", 0) == styled->token_feature("doc", 0));
  CHECK(plain->token_feature("doc", 1) != styled->token_feature("doc", 1));
  const auto italic = pseudo_features(two_words(kStyleNone, kStyleItalic), 8);
  CHECK(italic->token_feature("doc", 1) != styled->token_feature("doc", 1));
  CHECK(plain->page_feature("doc") != styled->page_feature("doc"));
}

TEST_CASE("dim must be positive and unknown keys are data errors") {
  CHECK_THROWS_AS(PseudoFeatureProvider(0), ContractError);
  const auto p = pseudo_features(two_words(0, 0), 4);
  CHECK_THROWS_AS(p->token_feature("other", 0), DataError);
  CHECK_THROWS_AS(p->token_feature("doc", 2), DataError);
  CHECK_THROWS_AS(p->page_feature("other"), DataError);
}

TEST_CASE("serializer matches the documented byte layout") {
  const std::vector<FeatureRecord> recs{{"d", kPageIndex, {0.5, -0.25}}, {"d", 0, {1.0, 2.0}}};
  Bytes want = header(1, 2, 2);
  record(want, "d", -1, {0.5, -0.25});
  record(want, "d", 0, {1.0, 2.0});
  want.seal();
  CHECK(serialize_features(2, recs) == want.s);
}

TEST_CASE("file round trip equals source vectors") {
  const auto docs = synth::gen_forms(3, 2);
  PseudoFeatureProvider src(6);
  for (const auto& d : docs) src.add(d);
  const auto recs = collect_features(src, docs);
  const auto path = std::filesystem::temp_directory_path() / ("geotext_feat_" + std::to_string(::getpid()) + ".bin");
  write_feature_file(path, 6, recs);
  const auto loaded = file_features(path);
  std::filesystem::remove(path);
  CHECK(loaded->dim() == 6);
  for (const auto& d : docs) {
    CHECK(loaded->page_feature(d.doc_id) == src.page_feature(d.doc_id));
    for (std::size_t i = 0; i < d.words.size(); ++i) CHECK(loaded->token_feature(d.doc_id, i) == src.token_feature(d.doc_id, i));
  }
  CHECK(loaded->records().size() == recs.size());
  CHECK_THROWS_AS(loaded->token_feature("nope", 0), DataError);
  CHECK_THROWS_AS(loaded->page_feature("nope"), DataError);
  try {
    (void)loaded->token_feature("nope", 3);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("nope") != std::string::npos);
  }
}

TEST_CASE("malformed feature files raise the documented error kinds") {
  Bytes short_vec = header(1, 32, 1);
  record(short_vec, "d", 0, std::vector<double>(31, 0.0));
  short_vec.seal();
  CHECK_THROWS_AS(FileFeatureProvider::from_bytes(short_vec.s), FormatError);

  Bytes version = header(2, 1, 0);
  version.seal();
  CHECK_THROWS_AS(FileFeatureProvider::from_bytes(version.s), VersionError);

  Bytes good = header(1, 1, 1);
  record(good, "d", 0, {0.125});
  good.seal();
  CHECK(FileFeatureProvider::from_bytes(good.s).token_feature("d", 0) == std::vector<double>{0.125});
  std::string flipped = good.s;
  flipped[flipped.size() - 12] ^= 0x40;
  CHECK_THROWS_AS(FileFeatureProvider::from_bytes(flipped), IntegrityError);
  CHECK_THROWS_AS(FileFeatureProvider::from_bytes(good.s.substr(0, good.s.size() - 9)), FormatError);
  std::string magic = good.s;
  magic[0] = 'X';
  CHECK_THROWS_AS(FileFeatureProvider::from_bytes(magic), FormatError);

  Bytes dup = header(1, 1, 2);
  record(dup, "d", 0, {1.0});
  record(dup, "d", 0, {2.0});
  dup.seal();
  CHECK_THROWS_AS(FileFeatureProvider::from_bytes(dup.s), FormatError);
}

TEST_CASE("gather_features shares a word's vector across its pieces") {
  RawDocument d = two_words(kStyleBold, kStyleNone);
  const Vocabulary v = build_vocab(std::vector<std::string>{"alpha", "beta"}, 20);
  std::size_t pieces = 0;
  for (const auto& w : d.words) pieces += tokenize_word(v, w.text).size();
  REQUIRE(pieces > 2);
  const auto s = encode_document(v, normalized_words(d), 16, d.doc_id);
  const auto p = pseudo_features(d, 3);
  const ImageFeatures f = gather_features(*p, s);
  CHECK(f.page.data()[0] == p->page_feature("doc")[0]);
  for (std::size_t i = 0; i < s.max_len(); ++i) {
    CAPTURE(i);
    const bool word = s.mask[i] && s.word_ids[i] >= 0;
    CHECK(f.is_word[i] == (word ? 1 : 0));
    const auto row = f.tokens.row(i);
    const auto want = word ? p->token_feature("doc", static_cast<std::size_t>(s.word_ids[i])) : std::vector<double>(3, 0.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(row[k] == want[k]);
  }
}
