#include "geotext/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "geotext/error.hpp"
#include "geotext/parallel.hpp"

namespace geotext::synth {

const std::vector<std::string>& default_lexicon() {
  static const std::vector<std::string> words = {
      "account", "agent",   "amount",  "annual",  "approval", "balance", "branch", "budget",  "carrier", "charge",
      "client",  "code",    "contact", "credit",  "current",  "date",    "debit",  "deposit", "details", "due",
      "entry",   "factor",  "fee",     "field",   "form",     "fund",    "grant",  "group",   "holder",  "index",
      "invoice", "item",    "limit",   "line",    "list",     "member",  "method", "name",    "net",     "notice",
      "number",  "office",  "order",   "owner",   "paid",     "party",   "period", "plan",    "policy",  "rate",
      "record",  "region",  "report",  "review",  "sector",   "series",  "status", "term",    "total",   "unit"};
  return words;
}

const std::vector<std::vector<std::string>>& default_phrasebook() {
  static const std::vector<std::vector<std::string>> phrases = [] {
    const auto& lex = default_lexicon();
    std::vector<std::size_t> order(lex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(0x9b7a5eedULL);
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i < order.size();) {
      const std::size_t len = std::min<std::size_t>(out.size() % 2 ? 2 : 3, order.size() - i);
      std::vector<std::string> ph;
      for (std::size_t k = 0; k < len; ++k) ph.push_back(lex[order[i + k]]);
      out.push_back(std::move(ph));
      i += len;
    }
    return out;
  }();
  return phrases;
}

const std::vector<std::string>& layout_class_names() {
  static const std::vector<std::string> names = {"one_column", "two_column", "header_block", "scattered"};
  return names;
}

const std::vector<std::string>& pretrain_tag_names() {
  static const std::vector<std::string> names = {"form", "classdoc", "two_column_geometry", "header"};
  return names;
}

void FormSpec::validate() const {
  if (n_pairs == 0) throw ConfigError("form spec: n_pairs must be positive");
  if (page_width <= 0 || page_height <= 0) throw ConfigError("form spec: page dims must be positive");
  if (key_lexicon.empty() || value_lexicon.empty()) throw ConfigError("form spec: empty lexicon");
  if (min_words < 1 || max_words < min_words) throw ConfigError("form spec: bad entity word range");
  if (!(below_rate >= 0.0 && below_rate <= 1.0)) throw ConfigError("form spec: below_rate outside [0,1]");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ConfigError("form spec: label_noise outside [0,1]");
  if (!(style_rate >= 0.0 && style_rate <= 1.0)) throw ConfigError("form spec: style_rate outside [0,1]");
  if (line_height <= 0 || line_gap < 0 || char_width <= 0 || word_gap < 0 || left_margin < 0 || top_margin < 0)
    throw ConfigError("form spec: negative geometry");

  std::size_t longest_key = 0, longest_value = 0;
  for (const auto& w : key_lexicon) longest_key = std::max(longest_key, w.size());
  for (const auto& w : value_lexicon) longest_value = std::max(longest_value, w.size());
  for (const auto& ph : phrases) {
    if (ph.size() < static_cast<std::size_t>(min_words) || ph.size() > static_cast<std::size_t>(max_words))
      throw ConfigError("form spec: phrase length outside [min_words, max_words]");
    for (const auto& w : ph) {
      longest_key = std::max(longest_key, w.size());
      longest_value = std::max(longest_value, w.size());
    }
  }
  const long long key_span = static_cast<long long>(max_words) * (static_cast<long long>(longest_key) * char_width + word_gap);
  if (left_margin + key_span >= value_x())
    throw ConfigError("form spec: key column overflows into the value column");
  const long long value_span =
      static_cast<long long>(max_words) * (static_cast<long long>(longest_value) * char_width + word_gap);
  if (value_x() + value_span > page_width) throw ConfigError("form spec: value column overflows the page width");
  // Worst case: every value on its own line.
  const long long height = top_margin + 2LL * static_cast<long long>(n_pairs) * (line_height + line_gap);
  if (height > page_height) throw ConfigError("form spec: form overflows the page height");
}

namespace {

const std::string& pick(const std::vector<std::string>& lex, Rng& rng) { return lex[rng.below(lex.size())]; }

int word_width(const std::string& w, int char_width) {
  return static_cast<int>(utf8_chars(w).size()) * char_width;
}

// Lays words out left to right from x on one line; returns the x after the last word.
int place_run(std::vector<RawWord>& out, const std::vector<std::string>& words, int x, int y, int h, int char_width,
              int gap, std::uint32_t style) {
  for (const auto& w : words) {
    const int width = word_width(w, char_width);
    out.push_back(RawWord{w, PixelBox{x, y, x + width, y + h}, style});
    x += width + gap;
  }
  return x;
}

}  // namespace

RawDocument gen_form(const FormSpec& spec, Rng& rng, std::string doc_id) {
  spec.validate();
  RawDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.page_width = spec.page_width;
  doc.page_height = spec.page_height;

  const int value_x = spec.value_x();
  int y = spec.top_margin;
  const int step = spec.line_height + spec.line_gap;
  for (std::size_t p = 0; p < spec.n_pairs; ++p) {
    auto draw = [&](const std::vector<std::string>& lex) {
      if (!spec.phrases.empty()) return spec.phrases[rng.below(spec.phrases.size())];
      const int n = static_cast<int>(rng.range(spec.min_words, spec.max_words));
      std::vector<std::string> ws;
      for (int i = 0; i < n; ++i) ws.push_back(pick(lex, rng));
      return ws;
    };
    const auto key = draw(spec.key_lexicon);
    const auto value = draw(spec.value_lexicon);
    const bool below = rng.bernoulli(spec.below_rate);
    const bool swap = rng.bernoulli(spec.label_noise);
    const std::uint32_t key_style = rng.bernoulli(spec.style_rate) ? kStyleBold : kStyleNone;

    const std::size_t key_start = doc.words.size();
    place_run(doc.words, key, spec.left_margin, y, spec.line_height, spec.char_width, spec.word_gap, key_style);
    const std::size_t key_end = doc.words.size() - 1;
    if (below) y += step;
    const std::size_t value_start = doc.words.size();
    place_run(doc.words, value, value_x, y, spec.line_height, spec.char_width, spec.word_gap, kStyleNone);
    const std::size_t value_end = doc.words.size() - 1;
    y += step;

    doc.entities.push_back(Entity{key_start, key_end, swap ? "answer" : "question"});
    doc.entities.push_back(Entity{value_start, value_end, swap ? "question" : "answer"});
  }
  return doc;
}

bool form_layout_self_check(const RawDocument& doc, const FormSpec& spec) {
  const int value_x = spec.value_x();
  for (const auto& e : doc.entities) {
    if (e.start > e.end || e.end >= doc.words.size()) return false;
    const bool left = doc.words[e.start].box.x0 < value_x;
    for (std::size_t i = e.start; i <= e.end; ++i)
      if ((doc.words[i].box.x0 < value_x) != left) return false;
    if (e.label != (left ? "question" : "answer")) return false;
  }
  for (const auto& w : doc.words) {
    PixelBox b = w.box;
    if (clip_to_page(b, doc.page_width, doc.page_height)) return false;
  }
  return true;
}

RawDocument gen_classdoc(std::size_t class_id, Rng& rng, const ClassDocSpec& spec, std::string doc_id) {
  if (class_id >= kNumLayoutClasses) throw ContractError("gen_classdoc: class id out of range");
  if (spec.lexicon.empty() || spec.min_words < 1 || spec.max_words < spec.min_words)
    throw ConfigError("classdoc spec: bad word range or empty lexicon");
  if (spec.page_width < 400 || spec.page_height < 400) throw ConfigError("classdoc spec: page too small");
  for (const auto& ph : spec.phrases)
    if (ph.empty()) throw ConfigError("classdoc spec: empty phrase");

  RawDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.page_width = spec.page_width;
  doc.page_height = spec.page_height;
  doc.class_label = layout_class_names()[class_id];

  // Content and style draws come first and are identical across classes.
  const int n = static_cast<int>(rng.range(spec.min_words, spec.max_words));
  std::vector<std::string> words;
  if (spec.phrases.empty()) {
    for (int i = 0; i < n; ++i) words.push_back(pick(spec.lexicon, rng));
  } else {
    while (words.size() < static_cast<std::size_t>(n)) {
      const auto& ph = spec.phrases[rng.below(spec.phrases.size())];
      words.insert(words.end(), ph.begin(), ph.end());
    }
    words.resize(static_cast<std::size_t>(n));
  }
  std::vector<double> style_draw(words.size());
  for (auto& d : style_draw) d = rng.uniform();

  const int W = spec.page_width, H = spec.page_height;
  const int cw = 8, lh = 18, lg = 10, gap = 7, margin = 40;
  auto flow = [&](std::size_t from, std::size_t to, int x0, int x1, int y, std::uint32_t style_mask,
                  double style_p) {
    int x = x0;
    for (std::size_t i = from; i < to; ++i) {
      const int w = word_width(words[i], cw);
      if (x + w > x1 && x != x0) {
        x = x0;
        y += lh + lg;
      }
      const std::uint32_t st = style_draw[i] < style_p ? style_mask : kStyleNone;
      doc.words.push_back(RawWord{words[i], PixelBox{x, y, std::min(x + w, W), std::min(y + lh, H)}, st});
      x += w + gap;
    }
    return y + lh + lg;
  };

  switch (static_cast<LayoutClass>(class_id)) {
    case LayoutClass::OneColumn:
      flow(0, words.size(), margin, W - margin, 60, kStyleNone, 0.0);
      break;
    case LayoutClass::TwoColumn: {
      const std::size_t half = words.size() / 2;
      flow(0, half, margin, W / 2 - 20, 60, kStyleUnderline, 0.3);
      flow(half, words.size(), W / 2 + 20, W - margin, 60, kStyleUnderline, 0.3);
      break;
    }
    case LayoutClass::HeaderBlock: {
      const std::size_t head = std::min<std::size_t>(4, words.size());
      int hw = 0;
      for (std::size_t i = 0; i < head; ++i) hw += word_width(words[i], cw) + gap;
      const int hx = std::max(margin, (W - hw) / 2);
      const int y = flow(0, head, hx, W - margin, 40, kStyleBold, 1.0);
      flow(head, words.size(), margin, W - margin, y + 40, kStyleNone, 0.0);
      break;
    }
    case LayoutClass::Scattered: {
      std::vector<RawWord> placed;
      for (std::size_t i = 0; i < words.size(); ++i) {
        const int w = word_width(words[i], cw);
        const int x = static_cast<int>(rng.range(margin, W - margin - w));
        const int y = static_cast<int>(rng.range(margin, H - margin - lh));
        placed.push_back(RawWord{words[i], PixelBox{x, y, x + w, y + lh},
                                 style_draw[i] < 0.3 ? kStyleItalic : kStyleNone});
      }
      std::stable_sort(placed.begin(), placed.end(), [](const RawWord& a, const RawWord& b) {
        return a.box.y0 != b.box.y0 ? a.box.y0 < b.box.y0 : a.box.x0 < b.box.x0;
      });
      doc.words = std::move(placed);
      break;
    }
  }
  for (auto& w : doc.words) doc.clipped_boxes += clip_to_page(w.box, W, H) ? 1 : 0;
  return doc;
}

RawDocument gen_receipt(Rng& rng, std::string doc_id, const std::vector<std::string>& lexicon) {
  if (lexicon.empty()) throw ConfigError("receipt: empty lexicon");
  RawDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.page_width = 600;
  doc.page_height = 1200;
  const int cw = 9, lh = 20, step = 30, gap = 8;
  int y = 40;
  auto words_of = [&](int lo, int hi) {
    std::vector<std::string> ws;
    const int n = static_cast<int>(rng.range(lo, hi));
    for (int i = 0; i < n; ++i) ws.push_back(pick(lexicon, rng));
    return ws;
  };
  auto join = [](const std::vector<std::string>& ws) {
    std::string s;
    for (const auto& w : ws) s += (s.empty() ? "" : " ") + w;
    return s;
  };
  auto line = [&](const std::vector<std::string>& ws, int x, std::uint32_t style) {
    place_run(doc.words, ws, x, y, lh, cw, gap, style);
    y += step;
  };

  const auto company = words_of(2, 3);
  line(company, 60, kStyleBold);
  const auto address = words_of(3, 4);
  line(address, 60, kStyleNone);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", static_cast<int>(rng.range(2015, 2024)),
                static_cast<int>(rng.range(1, 12)), static_cast<int>(rng.range(1, 28)));
  const std::string date = buf;
  line({"date", date}, 60, kStyleNone);
  const int items = static_cast<int>(rng.range(2, 5));
  for (int i = 0; i < items; ++i) {
    std::snprintf(buf, sizeof buf, "%d.%02d", static_cast<int>(rng.range(1, 99)), static_cast<int>(rng.range(0, 99)));
    auto ws = words_of(1, 2);
    ws.push_back(buf);
    line(ws, 60, kStyleNone);
  }
  std::snprintf(buf, sizeof buf, "%d.%02d", static_cast<int>(rng.range(100, 999)), static_cast<int>(rng.range(0, 99)));
  const std::string total = buf;
  line({"total", total}, 60, kStyleBold);

  doc.slots["company"] = join(company);
  doc.slots["address"] = join(address);
  doc.slots["date"] = date;
  doc.slots["total"] = total;
  return doc;
}

std::vector<double> expected_tag_marginals(const PretrainMix& mix) {
  const double f = mix.form_fraction, c = 1.0 - f, per_class = c / static_cast<double>(kNumLayoutClasses);
  return {f, c, f + per_class, per_class};
}

std::vector<RawDocument> gen_pretrain_documents(std::size_t n, std::uint64_t seed, const PretrainMix& mix) {
  if (n == 0) throw ContractError("gen_pretrain_documents: n must be at least 1");
  if (!(mix.form_fraction >= 0.0 && mix.form_fraction <= 1.0))
    throw ConfigError("pretrain mix: form_fraction outside [0,1]");
  mix.form.validate();
  const std::uint64_t base = derive_seed(seed, stream::kSynth);
  std::vector<RawDocument> docs(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(base, i));
    const bool form = rng.bernoulli(mix.form_fraction);
    const std::string id = "pre-" + std::to_string(i);
    RawDocument d;
    std::vector<bool> tags(kNumPretrainTags, false);
    if (form) {
      d = gen_form(mix.form, rng, id);
      tags[0] = true;
      tags[2] = true;  // key column + value column
    } else {
      const std::size_t cls = rng.below(kNumLayoutClasses);
      d = gen_classdoc(cls, rng, mix.classdoc, id);
      tags[1] = true;
      tags[2] = cls == static_cast<std::size_t>(LayoutClass::TwoColumn);
      tags[3] = cls == static_cast<std::size_t>(LayoutClass::HeaderBlock);
    }
    d.tags = std::move(tags);
    docs[i] = std::move(d);
  });
  return docs;
}

std::vector<PretrainExample> to_pretrain_examples(std::span<const RawDocument> docs, const Vocabulary& vocab,
                                                  std::size_t max_len) {
  std::vector<PretrainExample> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    PretrainExample ex;
    ex.sequence = encode_document(vocab, normalized_words(d), max_len, d.doc_id);
    ex.mdc_tags = d.tags;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<PretrainExample> gen_pretrain_corpus(std::size_t n, std::uint64_t seed, const Vocabulary& vocab,
                                                 std::size_t max_len, const PretrainMix& mix) {
  const auto docs = gen_pretrain_documents(n, seed, mix);
  return to_pretrain_examples(docs, vocab, max_len);
}

std::vector<std::string> corpus_words(std::span<const RawDocument> docs) {
  std::vector<std::string> out;
  for (const auto& d : docs)
    for (const auto& w : d.words) out.push_back(w.text);
  return out;
}

std::vector<RawDocument> gen_forms(std::size_t n, std::uint64_t seed, const FormSpec& spec, const std::string& prefix) {
  spec.validate();
  const std::uint64_t base = derive_seed(seed, stream::kSynth);
  std::vector<RawDocument> docs(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(base, i));
    docs[i] = gen_form(spec, rng, prefix + "-" + std::to_string(i));
  });
  return docs;
}

std::vector<RawDocument> gen_classdocs(std::size_t n, std::uint64_t seed, const ClassDocSpec& spec,
                                       const std::string& prefix) {
  const std::uint64_t base = derive_seed(seed, stream::kSynth);
  std::vector<RawDocument> docs(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(base, i));
    docs[i] = gen_classdoc(i % kNumLayoutClasses, rng, spec, prefix + "-" + std::to_string(i));
  });
  return docs;
}

std::vector<RawDocument> gen_receipts(std::size_t n, std::uint64_t seed, const std::string& prefix) {
  const std::uint64_t base = derive_seed(seed, stream::kSynth);
  std::vector<RawDocument> docs(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(base, i));
    docs[i] = gen_receipt(rng, prefix + "-" + std::to_string(i));
  }
  return docs;
}

}  // namespace geotext::synth
