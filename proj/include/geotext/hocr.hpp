#pragma once

#include <string>
#include <string_view>

#include "geotext/document.hpp"

namespace geotext {

/// Reads the hOCR subset: one `ocr_page` (page size from its bbox) and its
/// `ocrx_word` elements in document order. Other OCR containers
/// (ocr_carea, ocr_par, ocr_line, ...) are walked through. <strong>/<b>,
/// <em>/<i> and <u> inside a word set its style flags. Words whose trimmed
/// text is empty are dropped; boxes are clipped to the page and counted in
/// clipped_boxes.
///
/// Throws ParseError (with a line number) for anything else: no or several
/// pages, missing/malformed/non-integer bbox, unterminated markup. Never
/// crashes on arbitrary bytes.
RawDocument parse_hocr(std::string_view text);

/// Canonical writer; parse_hocr(write_hocr(d)) reproduces d's words, page
/// size and doc_id.
std::string write_hocr(const RawDocument& doc);

}  // namespace geotext
