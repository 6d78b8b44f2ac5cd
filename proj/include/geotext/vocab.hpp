#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geotext/sequence.hpp"

namespace geotext {

class Vocabulary {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kCls = "[CLS]";
  static constexpr std::string_view kSep = "[SEP]";
  static constexpr std::string_view kMask = "[MASK]";
  static constexpr std::string_view kContinuation = "##";
  static constexpr std::size_t kNumSpecial = 5;

  /// Tokens in id order. [PAD] must be id 0; the other specials must be
  /// present; duplicates are rejected.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::optional<std::uint32_t> find(std::string_view token) const;
  const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::uint32_t pad_id() const noexcept { return 0; }
  std::uint32_t unk_id() const noexcept { return unk_; }
  std::uint32_t cls_id() const noexcept { return cls_; }
  std::uint32_t sep_id() const noexcept { return sep_; }
  std::uint32_t mask_id() const noexcept { return mask_; }
  bool is_special(std::uint32_t id) const noexcept {
    return id == 0 || id == unk_ || id == cls_ || id == sep_ || id == mask_;
  }

  /// One token per line, line number = id, LF endings.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::uint32_t unk_ = 0, cls_ = 0, sep_ = 0, mask_ = 0;
};

/// ASCII case folding applied before counting and before lookup.
std::string fold_case(std::string_view w);

/// Splits UTF-8 into code point substrings. Invalid lead bytes are taken
/// as single-byte units.
std::vector<std::string_view> utf8_chars(std::string_view s);

/// Builds a subword vocabulary: the five specials, every character in both
/// word-initial and "##" continuation form, then pair merges in order of
/// descending corpus frequency (ties: lexicographically smallest merged
/// string first) until `target_size` tokens exist or nothing is left to merge.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size);

/// Greedy longest-match-first segmentation. A word with any unmatched
/// remainder becomes a single [UNK].
std::vector<std::uint32_t> tokenize_word(const Vocabulary& vocab, std::string_view word);

/// [CLS] + pieces + [SEP] truncated/padded to max_len. Pieces inherit their
/// word's box; [CLS] gets the whole page, [SEP] and [PAD] get (0,0,0,0).
TokenSequence encode_document(const Vocabulary& vocab, std::span<const Word> words, std::size_t max_len,
                              std::string doc_id = {});

}  // namespace geotext
