#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geotext/sequence.hpp"

namespace geotext {

/// Synthetic typographic attributes. They stand in for what a visual
/// feature extractor would see and only reach the model through image features.
enum StyleFlags : std::uint32_t {
  kStyleNone = 0,
  kStyleBold = 1u << 0,
  kStyleItalic = 1u << 1,
  kStyleUnderline = 1u << 2,
};

/// Pixel-space box as produced by OCR.
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct RawWord {
  std::string text;
  PixelBox box;
  std::uint32_t style = kStyleNone;
  friend bool operator==(const RawWord&, const RawWord&) = default;
};

/// Inclusive span of word indices (or token indices, after encoding).
struct Entity {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;
  friend auto operator<=>(const Entity&, const Entity&) = default;
};

struct RawDocument {
  std::string doc_id;
  int page_width = 0;
  int page_height = 0;
  std::vector<RawWord> words;
  std::optional<std::string> class_label;
  std::optional<std::vector<bool>> tags;
  std::vector<Entity> entities;                 // word-index spans
  std::map<std::string, std::string> slots;     // key -> exact string
  std::size_t clipped_boxes = 0;                // boxes clipped to the page while parsing

  friend bool operator==(const RawDocument& a, const RawDocument& b) {
    return a.doc_id == b.doc_id && a.page_width == b.page_width && a.page_height == b.page_height &&
           a.words == b.words && a.class_label == b.class_label && a.tags == b.tags && a.entities == b.entities &&
           a.slots == b.slots;
  }
};

/// Scales a pixel box onto the 0..1000 grid: floor(1000*v/page_dim), then
/// clamps. Coordinate order within the box is preserved.
BBox normalize_bbox(const PixelBox& raw, int page_w, int page_h);

/// Clips a pixel box to [0,w]x[0,h]; returns true if anything changed.
bool clip_to_page(PixelBox& box, int page_w, int page_h);

/// Words with normalized boxes, ready for encode_document.
std::vector<Word> normalized_words(const RawDocument& doc);

}  // namespace geotext
