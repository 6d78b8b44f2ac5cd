#include "geotext/document.hpp"

#include <algorithm>

#include "geotext/error.hpp"

namespace geotext {

namespace {
int scale(int v, int dim) {
  if (v <= 0) return 0;
  const long long s = 1000LL * v / dim;  // floor for non-negative operands
  return static_cast<int>(std::min<long long>(s, kGridMax));
}
}  // namespace

BBox normalize_bbox(const PixelBox& raw, int page_w, int page_h) {
  require(page_w > 0 && page_h > 0, "normalize_bbox: page dimensions must be positive");
  BBox b{scale(raw.x0, page_w), scale(raw.y0, page_h), scale(raw.x1, page_w), scale(raw.y1, page_h)};
  if (b.x0 > b.x1) std::swap(b.x0, b.x1);
  if (b.y0 > b.y1) std::swap(b.y0, b.y1);
  return b;
}

bool clip_to_page(PixelBox& box, int page_w, int page_h) {
  const PixelBox before = box;
  box.x0 = std::clamp(box.x0, 0, page_w);
  box.x1 = std::clamp(box.x1, 0, page_w);
  box.y0 = std::clamp(box.y0, 0, page_h);
  box.y1 = std::clamp(box.y1, 0, page_h);
  return !(before == box);
}

std::vector<Word> normalized_words(const RawDocument& doc) {
  std::vector<Word> out;
  out.reserve(doc.words.size());
  for (const auto& w : doc.words) out.push_back(Word{w.text, normalize_bbox(w.box, doc.page_width, doc.page_height)});
  return out;
}

}  // namespace geotext
