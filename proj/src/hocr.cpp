#include "geotext/hocr.hpp"

#include <charconv>
#include <cstdint>
#include <vector>

#include "geotext/error.hpp"

namespace geotext {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lower_str(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = lower(c);
  return out;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

/// Decodes the five XML entities and numeric references; anything else is kept literally.
std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out += s[i];
      continue;
    }
    const std::string_view ent = s.substr(i + 1, semi - i - 1);
    bool ok = true;
    if (ent == "amp") out += '&';
    else if (ent == "lt") out += '<';
    else if (ent == "gt") out += '>';
    else if (ent == "quot") out += '"';
    else if (ent == "apos") out += '\'';
    else if (ent.size() >= 2 && ent[0] == '#') {
      std::uint32_t cp = 0;
      const bool hex = ent[1] == 'x' || ent[1] == 'X';
      const auto digits = ent.substr(hex ? 2 : 1);
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
      if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || cp == 0 || cp > 0x10FFFF ||
          (cp >= 0xD800 && cp <= 0xDFFF)) {
        ok = false;
      } else {
        append_utf8(out, cp);
      }
    } else {
      ok = false;
    }
    if (!ok) {
      out += s[i];
      continue;
    }
    i = semi;
  }
  return out;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Attr {
  std::string name;
  std::string value;
};

struct Tag {
  std::string name;
  std::vector<Attr> attrs;
  bool closing = false;
  bool self_closing = false;

  const std::string* attr(std::string_view n) const {
    for (const auto& a : attrs) {
      if (a.name == n) return &a.value;
    }
    return nullptr;
  }
  bool has_class(std::string_view cls) const {
    const std::string* c = attr("class");
    if (!c) return false;
    std::string_view rest = *c;
    while (!rest.empty()) {
      while (!rest.empty() && is_space(rest.front())) rest.remove_prefix(1);
      std::size_t n = 0;
      while (n < rest.size() && !is_space(rest[n])) ++n;
      if (rest.substr(0, n) == cls) return true;
      rest.remove_prefix(n);
    }
    return false;
  }
};

bool is_void_element(const std::string& n) {
  return n == "meta" || n == "link" || n == "br" || n == "img" || n == "hr" || n == "input" || n == "base" ||
         n == "col" || n == "area" || n == "wbr" || n == "source" || n == "param" || n == "embed" || n == "track";
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  RawDocument run();

 private:
  [[noreturn]] void fail(const std::string& msg, std::size_t line) const {
    throw ParseError("hOCR line " + std::to_string(line) + ": " + msg);
  }

  std::size_t line_at(std::size_t pos) {
    while (line_pos_ < pos && line_pos_ < s_.size()) {
      if (s_[line_pos_] == '\n') ++line_;
      ++line_pos_;
    }
    return line_;
  }

  Tag read_tag(std::size_t start, std::size_t& end);
  PixelBox parse_bbox(const Tag& tag, std::size_t line, const char* what, bool* found);
  void handle_text(std::string_view raw);

  struct Open {
    std::string name;
    bool word;
  };

  std::string_view s_;
  std::size_t line_ = 1;
  std::size_t line_pos_ = 0;
  std::vector<Open> stack_;

  RawDocument doc_;
  bool have_page_ = false;
  std::size_t page_depth_ = 0;  // stack size when the page opened; 0 = closed
  bool page_closed_ = false;
  bool in_word_ = false;
  std::size_t word_depth_ = 0;
  std::size_t word_line_ = 0;
  RawWord word_;
  std::string word_text_;
};

Tag Parser::read_tag(std::size_t start, std::size_t& end) {
  const std::size_t line = line_at(start);
  std::size_t i = start + 1;
  Tag t;
  if (i < s_.size() && s_[i] == '/') {
    t.closing = true;
    ++i;
  }
  const std::size_t name_start = i;
  while (i < s_.size() && !is_space(s_[i]) && s_[i] != '>' && s_[i] != '/') ++i;
  t.name = lower_str(s_.substr(name_start, i - name_start));
  if (t.name.empty()) fail("tag without a name", line);
  for (;;) {
    while (i < s_.size() && is_space(s_[i])) ++i;
    if (i >= s_.size()) fail("unterminated tag <" + t.name, line);
    if (s_[i] == '>') {
      end = i + 1;
      return t;
    }
    if (s_[i] == '/') {
      ++i;
      if (i < s_.size() && s_[i] == '>') {
        t.self_closing = true;
        end = i + 1;
        return t;
      }
      continue;
    }
    const std::size_t an = i;
    while (i < s_.size() && !is_space(s_[i]) && s_[i] != '=' && s_[i] != '>' && s_[i] != '/') ++i;
    Attr a{lower_str(s_.substr(an, i - an)), {}};
    while (i < s_.size() && is_space(s_[i])) ++i;
    if (i < s_.size() && s_[i] == '=') {
      ++i;
      while (i < s_.size() && is_space(s_[i])) ++i;
      if (i >= s_.size()) fail("unterminated attribute in <" + t.name, line);
      if (s_[i] == '"' || s_[i] == '\'') {
        const char q = s_[i];
        const auto close = s_.find(q, i + 1);
        if (close == std::string_view::npos) fail("unterminated attribute value in <" + t.name, line);
        a.value = decode_entities(s_.substr(i + 1, close - i - 1));
        i = close + 1;
      } else {
        const std::size_t vs = i;
        while (i < s_.size() && !is_space(s_[i]) && s_[i] != '>') ++i;
        a.value = decode_entities(s_.substr(vs, i - vs));
      }
    }
    if (!a.name.empty()) t.attrs.push_back(std::move(a));
  }
}

PixelBox Parser::parse_bbox(const Tag& tag, std::size_t line, const char* what, bool* found) {
  *found = false;
  const std::string* title = tag.attr("title");
  if (!title) return {};
  std::string_view rest = *title;
  while (!rest.empty()) {
    auto semi = rest.find(';');
    std::string_view prop = trim(rest.substr(0, semi));
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    if (prop.size() < 4 || prop.substr(0, 4) != "bbox" || (prop.size() > 4 && !is_space(prop[4]))) continue;
    *found = true;
    std::string_view nums = prop.substr(4);
    int v[4];
    for (int k = 0; k < 4; ++k) {
      nums = trim(nums);
      std::size_t n = 0;
      while (n < nums.size() && !is_space(nums[n])) ++n;
      const std::string_view tok = nums.substr(0, n);
      if (tok.empty()) fail(std::string("malformed bbox on ") + what + ": expected 4 coordinates", line);
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v[k]);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        fail(std::string("non-integer bbox coordinate '") + std::string(tok) + "' on " + what, line);
      }
      nums.remove_prefix(n);
    }
    if (!trim(nums).empty()) fail(std::string("malformed bbox on ") + what + ": more than 4 coordinates", line);
    if (v[0] > v[2] || v[1] > v[3]) fail(std::string("malformed bbox on ") + what + ": corners out of order", line);
    return PixelBox{v[0], v[1], v[2], v[3]};
  }
  return {};
}

void Parser::handle_text(std::string_view raw) {
  if (in_word_) word_text_ += decode_entities(raw);
}

RawDocument Parser::run() {
  std::size_t i = 0;
  while (i < s_.size()) {
    const auto lt = s_.find('<', i);
    if (lt == std::string_view::npos) {
      handle_text(s_.substr(i));
      break;
    }
    handle_text(s_.substr(i, lt - i));
    if (s_.compare(lt, 4, "<!--") == 0) {
      const auto close = s_.find("-->", lt + 4);
      if (close == std::string_view::npos) fail("unterminated comment", line_at(lt));
      i = close + 3;
      continue;
    }
    if (lt + 1 < s_.size() && (s_[lt + 1] == '!' || s_[lt + 1] == '?')) {
      const auto close = s_.find('>', lt);
      if (close == std::string_view::npos) fail("unterminated declaration", line_at(lt));
      i = close + 1;
      continue;
    }
    std::size_t end = 0;
    Tag tag = read_tag(lt, end);
    const std::size_t line = line_at(lt);
    i = end;

    if (tag.closing) {
      // Pop to the nearest matching element; stray closers are ignored.
      std::size_t k = stack_.size();
      while (k > 0 && stack_[k - 1].name != tag.name) --k;
      if (k == 0) continue;
      while (stack_.size() >= k) {
        if (in_word_ && stack_.size() == word_depth_) {
          in_word_ = false;
          const std::string_view text = trim(word_text_);
          if (!text.empty()) {
            word_.text = std::string(text);
            if (clip_to_page(word_.box, doc_.page_width, doc_.page_height)) ++doc_.clipped_boxes;
            doc_.words.push_back(std::move(word_));
          }
        }
        if (page_depth_ != 0 && stack_.size() == page_depth_) {
          page_depth_ = 0;
          page_closed_ = true;
        }
        stack_.pop_back();
      }
      continue;
    }

    if (in_word_) {
      if (tag.name == "strong" || tag.name == "b") word_.style |= kStyleBold;
      if (tag.name == "em" || tag.name == "i") word_.style |= kStyleItalic;
      if (tag.name == "u") word_.style |= kStyleUnderline;
    }

    const bool is_page = tag.has_class("ocr_page");
    const bool is_word = tag.has_class("ocrx_word");
    if (is_page) {
      if (have_page_) fail("more than one ocr_page element", line);
      bool found = false;
      PixelBox pb = parse_bbox(tag, line, "ocr_page", &found);
      if (!found) fail("ocr_page has no bbox in its title attribute", line);
      const long long w = static_cast<long long>(pb.x1) - pb.x0;
      const long long h = static_cast<long long>(pb.y1) - pb.y0;
      if (w <= 0 || h <= 0) fail("ocr_page bbox has zero area", line);
      if (w > 1'000'000 || h > 1'000'000) fail("ocr_page bbox is implausibly large", line);
      have_page_ = true;
      doc_.page_width = static_cast<int>(w);
      doc_.page_height = static_cast<int>(h);
      const std::string* id = tag.attr("id");
      doc_.doc_id = id ? *id : std::string("page_1");
    }
    if (is_word) {
      const std::string* id = tag.attr("id");
      const std::string what = "ocrx_word" + (id ? " '" + *id + "'" : std::string());
      if (in_word_) fail("nested " + what, line);
      if (!have_page_ || page_closed_) fail(what + " outside ocr_page", line);
      bool found = false;
      PixelBox wb = parse_bbox(tag, line, what.c_str(), &found);
      if (!found) fail(what + " has no bbox in its title attribute", line);
      word_ = RawWord{{}, wb, kStyleNone};
      word_text_.clear();
      word_line_ = line;
    }
    if (tag.self_closing || is_void_element(tag.name)) {
      continue;  // an empty self-closed word carries no text and is dropped
    }
    stack_.push_back(Open{tag.name, is_word});
    if (is_page) page_depth_ = stack_.size();
    if (is_word) {
      in_word_ = true;
      word_depth_ = stack_.size();
    }
  }
  if (in_word_) fail("unterminated ocrx_word", word_line_);
  if (!have_page_) fail("no ocr_page element with a bbox", line_at(s_.size()));
  return std::move(doc_);
}

}  // namespace

RawDocument parse_hocr(std::string_view text) { return Parser(text).run(); }

std::string write_hocr(const RawDocument& doc) {
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<!DOCTYPE html PUBLIC \"-//W3C//DTD XHTML 1.0 Transitional//EN\" "
         "\"http://www.w3.org/TR/xhtml1/DTD/xhtml1-transitional.dtd\">\n";
  out += "<html xmlns=\"http://www.w3.org/1999/xhtml\" xml:lang=\"en\" lang=\"en\">\n";
  out += " <head>\n  <title></title>\n";
  out += "  <meta http-equiv=\"Content-Type\" content=\"text/html;charset=utf-8\"/>\n";
  out += "  <meta name=\"ocr-system\" content=\"geotext\"/>\n";
  out += "  <meta name=\"ocr-capabilities\" content=\"ocr_page ocrx_word\"/>\n";
  out += " </head>\n <body>\n";
  out += "  <div class='ocr_page' id='" + escape(doc.doc_id) + "' title='bbox 0 0 " + std::to_string(doc.page_width) +
         " " + std::to_string(doc.page_height) + "'>\n";
  for (std::size_t i = 0; i < doc.words.size(); ++i) {
    const auto& w = doc.words[i];
    std::string text = escape(w.text);
    if (w.style & kStyleUnderline) text = "<u>" + text + "</u>";
    if (w.style & kStyleItalic) text = "<em>" + text + "</em>";
    if (w.style & kStyleBold) text = "<strong>" + text + "</strong>";
    out += "   <span class='ocrx_word' id='word_1_" + std::to_string(i + 1) + "' title='bbox " +
           std::to_string(w.box.x0) + " " + std::to_string(w.box.y0) + " " + std::to_string(w.box.x1) + " " +
           std::to_string(w.box.y1) + "'>" + text + "</span>\n";
  }
  out += "  </div>\n </body>\n</html>\n";
  return out;
}

}  // namespace geotext
