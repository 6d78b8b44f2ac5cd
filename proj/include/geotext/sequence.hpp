#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace geotext {

inline constexpr int kGridMax = 1000;               // virtual coordinates are 0..1000 inclusive
inline constexpr std::size_t kCoordVocab = kGridMax + 1;

/// Word box on the virtual grid; (x0,y0) upper-left, (x1,y1) lower-right.
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool valid() const noexcept {
    return 0 <= x0 && x0 <= x1 && x1 <= kGridMax && 0 <= y0 && y0 <= y1 && y1 <= kGridMax;
  }
  friend bool operator==(const BBox&, const BBox&) = default;

  static constexpr BBox page() { return {0, 0, kGridMax, kGridMax}; }
  static constexpr BBox none() { return {0, 0, 0, 0}; }
};

/// A word with its box already normalized to the grid.
struct Word {
  std::string text;
  BBox box;
};

/// Model input for one document. All per-token arrays have exactly max_len
/// entries; real tokens form a prefix (mask 1), padding follows (mask 0).
struct TokenSequence {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint32_t> positions;
  std::vector<std::uint8_t> segments;
  std::vector<BBox> bboxes;
  std::vector<std::uint8_t> mask;
  /// Source word index per token, -1 for [CLS]/[SEP]/[PAD]. Together with
  /// doc_id this is the handle for per-token image features.
  std::vector<std::int32_t> word_ids;
  std::string doc_id;

  std::size_t max_len() const noexcept { return ids.size(); }
  /// Number of mask-1 tokens ([CLS] .. [SEP]).
  std::size_t real_length() const noexcept;

  /// Throws ContractError if parallel arrays disagree, a box is off-grid,
  /// the mask is not a prefix, or a masked-out slot is not `pad_id`.
  void validate(std::uint32_t pad_id = 0) const;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

}  // namespace geotext
