#include "geotext/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "geotext/error.hpp"

namespace geotext {

std::size_t TokenSequence::real_length() const noexcept {
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

void TokenSequence::validate(std::uint32_t pad_id) const {
  const std::size_t n = ids.size();
  require(n >= 2, "TokenSequence: length must be >= 2");
  require(positions.size() == n && segments.size() == n && bboxes.size() == n && mask.size() == n &&
              word_ids.size() == n,
          "TokenSequence: parallel arrays differ in length");
  bool in_padding = false;
  for (std::size_t i = 0; i < n; ++i) {
    require(bboxes[i].valid(), "TokenSequence: box off the virtual grid at token " + std::to_string(i));
    require(segments[i] <= 1, "TokenSequence: segment id must be 0 or 1");
    if (mask[i] == 0) {
      in_padding = true;
      require(ids[i] == pad_id, "TokenSequence: masked-out token " + std::to_string(i) + " is not [PAD]");
    } else {
      require(!in_padding, "TokenSequence: attention mask is not a prefix");
    }
  }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    require(!tokens_[i].empty(), "Vocabulary: empty token at id " + std::to_string(i));
    require(tokens_[i].find('\n') == std::string::npos, "Vocabulary: token contains a newline");
    const bool fresh = index_.emplace(tokens_[i], static_cast<std::uint32_t>(i)).second;
    require(fresh, "Vocabulary: duplicate token '" + tokens_[i] + "'");
  }
  require(!tokens_.empty() && tokens_[0] == kPad, "Vocabulary: [PAD] must have id 0");
  auto special = [&](std::string_view t) {
    auto id = find(t);
    require(id.has_value(), "Vocabulary: missing special token " + std::string(t));
    return *id;
  };
  unk_ = special(kUnk);
  cls_ = special(kCls);
  sep_ = special(kSep);
  mask_ = special(kMask);
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) throw FormatError("vocabulary file: last line lacks LF terminator");
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') throw FormatError("vocabulary file: CRLF line endings are not accepted");
    tokens.emplace_back(line);
    start = nl + 1;
  }
  try {
    return Vocabulary(std::move(tokens));
  } catch (const ContractError& e) {
    throw FormatError(std::string("vocabulary file: ") + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary to " + path.string());
  out << to_text();
  if (!out) throw DataError("failed writing vocabulary to " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string fold_case(std::string_view w) {
  std::string out(w);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string_view> utf8_chars(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0 && c < 0xF8) len = 4;
    else if (c >= 0xE0) len = c < 0xF0 ? 3 : 1;
    else if (c >= 0xC0) len = 2;
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

std::string strip_continuation(const std::string& piece) {
  return piece.rfind(Vocabulary::kContinuation, 0) == 0 ? piece.substr(Vocabulary::kContinuation.size()) : piece;
}

}  // namespace

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size) {
  require(!corpus.empty(), "build_vocab: empty corpus");

  std::map<std::string, std::uint64_t> word_freq;
  for (const auto& w : corpus) {
    if (w.empty()) continue;
    ++word_freq[fold_case(w)];
  }
  require(!word_freq.empty(), "build_vocab: corpus has no non-empty words");

  // Symbol sequences per distinct word, first symbol plain, the rest "##".
  struct Entry {
    std::vector<std::string> symbols;
    std::uint64_t freq;
  };
  std::vector<Entry> words;
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    Entry e{{}, f};
    bool first = true;
    for (auto ch : utf8_chars(w)) {
      std::string sym = first ? std::string(ch) : std::string(Vocabulary::kContinuation) + std::string(ch);
      alphabet.insert(sym);
      alphabet.insert(first ? std::string(Vocabulary::kContinuation) + std::string(ch) : std::string(ch));
      e.symbols.push_back(std::move(sym));
      first = false;
    }
    words.push_back(std::move(e));
  }

  const std::size_t minimum = Vocabulary::kNumSpecial + alphabet.size();
  require(target_size > minimum, "build_vocab: target_size " + std::to_string(target_size) +
                                     " must exceed specials + alphabet = " + std::to_string(minimum));

  std::vector<std::string> tokens{std::string(Vocabulary::kPad), std::string(Vocabulary::kUnk),
                                  std::string(Vocabulary::kCls), std::string(Vocabulary::kSep),
                                  std::string(Vocabulary::kMask)};
  std::set<std::string> present(tokens.begin(), tokens.end());
  for (const auto& a : alphabet) {
    if (present.insert(a).second) tokens.push_back(a);
  }

  while (tokens.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::uint64_t> pairs;
    for (const auto& e : words) {
      for (std::size_t i = 0; i + 1 < e.symbols.size(); ++i) pairs[{e.symbols[i], e.symbols[i + 1]}] += e.freq;
    }
    if (pairs.empty()) break;
    // Highest frequency first; ties go to the smaller merged string, then the smaller pair.
    const std::pair<std::string, std::string>* best = nullptr;
    std::uint64_t best_freq = 0;
    std::string best_merged;
    for (const auto& [p, f] : pairs) {
      std::string merged = p.first + strip_continuation(p.second);
      if (!best || f > best_freq || (f == best_freq && merged < best_merged)) {
        best = &p;
        best_freq = f;
        best_merged = std::move(merged);
      }
    }
    const auto left = best->first, right = best->second;
    for (auto& e : words) {
      std::vector<std::string> next;
      next.reserve(e.symbols.size());
      for (std::size_t i = 0; i < e.symbols.size(); ++i) {
        if (i + 1 < e.symbols.size() && e.symbols[i] == left && e.symbols[i + 1] == right) {
          next.push_back(best_merged);
          ++i;
        } else {
          next.push_back(e.symbols[i]);
        }
      }
      e.symbols = std::move(next);
    }
    if (present.insert(best_merged).second) tokens.push_back(best_merged);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::uint32_t> tokenize_word(const Vocabulary& vocab, std::string_view word) {
  require(!word.empty(), "tokenize_word: empty word");
  const std::string folded = fold_case(word);
  const auto chars = utf8_chars(folded);
  // Byte offset of each character boundary.
  std::vector<std::size_t> offs;
  offs.reserve(chars.size() + 1);
  std::size_t off = 0;
  for (auto c : chars) {
    offs.push_back(off);
    off += c.size();
  }
  offs.push_back(off);

  std::vector<std::uint32_t> out;
  std::size_t start = 0;
  std::string candidate;
  while (start < chars.size()) {
    std::optional<std::uint32_t> match;
    std::size_t end = chars.size();
    for (; end > start; --end) {
      candidate.clear();
      if (start > 0) candidate += Vocabulary::kContinuation;
      candidate.append(folded, offs[start], offs[end] - offs[start]);
      if ((match = vocab.find(candidate))) break;
    }
    if (!match) return {vocab.unk_id()};
    out.push_back(*match);
    start = end;
  }
  return out;
}

TokenSequence encode_document(const Vocabulary& vocab, std::span<const Word> words, std::size_t max_len,
                              std::string doc_id) {
  require(max_len >= 2, "encode_document: max_len must be >= 2");
  TokenSequence s;
  s.doc_id = std::move(doc_id);
  s.ids.reserve(max_len);
  s.ids.push_back(vocab.cls_id());
  s.bboxes.push_back(BBox::page());
  s.word_ids.push_back(-1);

  const std::size_t budget = max_len - 2;
  for (std::size_t w = 0; w < words.size() && s.ids.size() - 1 < budget; ++w) {
    require(words[w].box.valid(), "encode_document: word " + std::to_string(w) + " box is off the virtual grid");
    for (auto id : tokenize_word(vocab, words[w].text)) {
      if (s.ids.size() - 1 >= budget) break;
      s.ids.push_back(id);
      s.bboxes.push_back(words[w].box);
      s.word_ids.push_back(static_cast<std::int32_t>(w));
    }
  }
  s.ids.push_back(vocab.sep_id());
  s.bboxes.push_back(BBox::none());
  s.word_ids.push_back(-1);

  s.mask.assign(s.ids.size(), 1);
  while (s.ids.size() < max_len) {
    s.ids.push_back(vocab.pad_id());
    s.bboxes.push_back(BBox::none());
    s.word_ids.push_back(-1);
    s.mask.push_back(0);
  }
  s.positions.resize(max_len);
  for (std::size_t i = 0; i < max_len; ++i) s.positions[i] = static_cast<std::uint32_t>(i);
  s.segments.assign(max_len, 0);
  return s;
}

}  // namespace geotext
