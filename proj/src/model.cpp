#include "geotext/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "geotext/error.hpp"
#include "geotext/rng.hpp"

namespace geotext {

// ------------------------------------------------------------------ config

void ModelConfig::validate() const {
  std::vector<std::string> problems;
  auto need = [&](bool ok, const char* msg) {
    if (!ok) problems.emplace_back(msg);
  };
  need(layers <= 64, "layers must be <= 64");
  need(hidden >= 1, "hidden must be >= 1");
  need(heads >= 1, "heads must be >= 1");
  need(heads >= 1 && hidden % heads == 0, "hidden must be divisible by heads");
  need(ffn_dim >= 1, "ffn_dim must be >= 1");
  need(max_len >= 2, "max_len must be >= 2");
  need(vocab_size > 5, "vocab_size must exceed the 5 special tokens");
  need(coord_vocab == kCoordVocab, "coord_vocab is fixed at 1001");
  need(img_feat_dim >= 1, "img_feat_dim must be >= 1");
  need(num_doc_classes >= 1, "num_doc_classes must be >= 1");
  need(num_mdc_tags >= 1, "num_mdc_tags must be >= 1");
  need(!tagset.empty(), "tagset must not be empty");
  need(ln_eps > 0.0, "ln_eps must be > 0");
  for (const auto& t : tagset) {
    need(!t.empty() && t.find_first_of(",\n=") == std::string::npos, "tag names must be non-empty without ',' '=' or newline");
  }
  if (!problems.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "layers=" << layers << '\n'
     << "hidden=" << hidden << '\n'
     << "heads=" << heads << '\n'
     << "ffn_dim=" << ffn_dim << '\n'
     << "max_len=" << max_len << '\n'
     << "vocab_size=" << vocab_size << '\n'
     << "coord_vocab=" << coord_vocab << '\n'
     << "img_feat_dim=" << img_feat_dim << '\n'
     << "num_doc_classes=" << num_doc_classes << '\n'
     << "num_mdc_tags=" << num_mdc_tags << '\n'
     << "tagset=";
  for (std::size_t i = 0; i < tagset.size(); ++i) os << (i ? "," : "") << tagset[i];
  os << '\n'
     << "use_layout=" << (use_layout ? 1 : 0) << '\n'
     << "use_image=" << (use_image ? 1 : 0) << '\n'
     << "ln_eps=" << ln_eps << '\n';
  return os.str();
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw FormatError("model config: bad integer for " + key + ": '" + v + "'");
  return out;
}

}  // namespace

ModelConfig ModelConfig::from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("model config: line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("model config: missing key ") + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  ModelConfig c;
  c.layers = parse_size("layers", take("layers"));
  c.hidden = parse_size("hidden", take("hidden"));
  c.heads = parse_size("heads", take("heads"));
  c.ffn_dim = parse_size("ffn_dim", take("ffn_dim"));
  c.max_len = parse_size("max_len", take("max_len"));
  c.vocab_size = parse_size("vocab_size", take("vocab_size"));
  c.coord_vocab = parse_size("coord_vocab", take("coord_vocab"));
  c.img_feat_dim = parse_size("img_feat_dim", take("img_feat_dim"));
  c.num_doc_classes = parse_size("num_doc_classes", take("num_doc_classes"));
  c.num_mdc_tags = parse_size("num_mdc_tags", take("num_mdc_tags"));
  c.tagset.clear();
  {
    std::string tags = take("tagset");
    std::size_t start = 0;
    while (start <= tags.size()) {
      auto comma = tags.find(',', start);
      if (comma == std::string::npos) comma = tags.size();
      c.tagset.push_back(tags.substr(start, comma - start));
      start = comma + 1;
    }
  }
  c.use_layout = parse_size("use_layout", take("use_layout")) != 0;
  c.use_image = parse_size("use_image", take("use_image")) != 0;
  {
    std::string v = take("ln_eps");
    try {
      std::size_t used = 0;
      c.ln_eps = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw FormatError("model config: bad number for ln_eps: '" + v + "'");
    }
  }
  if (!kv.empty()) throw FormatError("model config: unknown key " + kv.begin()->first);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return c;
}

// ------------------------------------------------------------------ params

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out{
      {"embeddings.word", &word_table},   {"embeddings.pos1d", &pos1d_table}, {"embeddings.segment", &segment_table},
      {"embeddings.x", &table_x},         {"embeddings.y", &table_y},
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string pre = "layer." + std::to_string(l) + ".";
    out.insert(out.end(), {{pre + "attn.wq", &L.wq},       {pre + "attn.bq", &L.bq},       {pre + "attn.wk", &L.wk},
                           {pre + "attn.bk", &L.bk},       {pre + "attn.wv", &L.wv},       {pre + "attn.bv", &L.bv},
                           {pre + "attn.wo", &L.wo},       {pre + "attn.bo", &L.bo},       {pre + "ln1.gamma", &L.ln1_gamma},
                           {pre + "ln1.beta", &L.ln1_beta}, {pre + "ffn.w1", &L.w1},       {pre + "ffn.b1", &L.b1},
                           {pre + "ffn.w2", &L.w2},        {pre + "ffn.b2", &L.b2},        {pre + "ln2.gamma", &L.ln2_gamma},
                           {pre + "ln2.beta", &L.ln2_beta}});
  }
  out.insert(out.end(), {{"head.mvlm.bias", &mvlm_bias},
                         {"head.mdc.w", &mdc_w},
                         {"head.mdc.b", &mdc_b},
                         {"head.seqlabel.w", &seqlabel_w},
                         {"head.seqlabel.b", &seqlabel_b},
                         {"head.docclass.w", &docclass_w},
                         {"head.docclass.b", &docclass_b},
                         {"image.proj.w", &img_proj_w},
                         {"image.proj.b", &img_proj_b}});
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, t] : std::as_const(*this).named()) out.emplace_back(name, const_cast<Tensor*>(t));
  return out;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

namespace {

struct ExpectedShape {
  std::string name;
  Shape shape;
};

std::vector<ExpectedShape> expected_shapes(const ModelConfig& c) {
  const std::size_t h = c.hidden;
  std::vector<ExpectedShape> out{{"embeddings.word", {c.vocab_size, h}}, {"embeddings.pos1d", {c.max_len, h}},
                                 {"embeddings.segment", {2, h}},         {"embeddings.x", {c.coord_vocab, h}},
                                 {"embeddings.y", {c.coord_vocab, h}}};
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = "layer." + std::to_string(l) + ".";
    out.insert(out.end(), {{pre + "attn.wq", {h, h}},        {pre + "attn.bq", {h}},
                           {pre + "attn.wk", {h, h}},        {pre + "attn.bk", {h}},
                           {pre + "attn.wv", {h, h}},        {pre + "attn.bv", {h}},
                           {pre + "attn.wo", {h, h}},        {pre + "attn.bo", {h}},
                           {pre + "ln1.gamma", {h}},         {pre + "ln1.beta", {h}},
                           {pre + "ffn.w1", {h, c.ffn_dim}}, {pre + "ffn.b1", {c.ffn_dim}},
                           {pre + "ffn.w2", {c.ffn_dim, h}}, {pre + "ffn.b2", {h}},
                           {pre + "ln2.gamma", {h}},         {pre + "ln2.beta", {h}}});
  }
  out.insert(out.end(), {{"head.mvlm.bias", {c.vocab_size}},
                         {"head.mdc.w", {h, c.num_mdc_tags}},
                         {"head.mdc.b", {c.num_mdc_tags}},
                         {"head.seqlabel.w", {h, c.tagset.size()}},
                         {"head.seqlabel.b", {c.tagset.size()}},
                         {"head.docclass.w", {2 * h, c.num_doc_classes}},
                         {"head.docclass.b", {c.num_doc_classes}},
                         {"image.proj.w", {c.img_feat_dim, h}},
                         {"image.proj.b", {h}}});
  return out;
}

bool is_bias_like(const std::string& name) {
  auto ends = [&](std::string_view suf) {
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  return ends(".bias") || ends(".b") || ends(".bq") || ends(".bk") || ends(".bv") || ends(".bo") || ends(".b1") ||
         ends(".b2") || ends(".beta");
}

bool is_gain(const std::string& name) { return name.size() >= 6 && name.compare(name.size() - 6, 6, ".gamma") == 0; }

}  // namespace

void ModelParams::validate(const ModelConfig& cfg) const {
  cfg.validate();
  require(layers.size() == cfg.layers, "ModelParams: layer count does not match config");
  const auto expect = expected_shapes(cfg);
  const auto have = named();
  require(expect.size() == have.size(), "ModelParams: tensor count does not match config");
  for (std::size_t i = 0; i < expect.size(); ++i) {
    require(have[i].second->shape() == expect[i].shape,
            "ModelParams: " + have[i].first + " has shape " + shape_str(have[i].second->shape()) + ", expected " +
                shape_str(expect[i].shape));
    check_finite(*have[i].second, have[i].first.c_str());
  }
}

bool is_text_backbone_tensor(std::string_view name) {
  return name == "embeddings.word" || name == "embeddings.pos1d" || name == "embeddings.segment" ||
         name.rfind("layer.", 0) == 0;
}

void apply_modality(const ModelConfig& cfg, ModelParams& p) {
  for (auto* t : p.tensors()) t->set_requires_grad(true);
  if (!cfg.use_layout) {
    p.table_x.fill(0.0);
    p.table_y.fill(0.0);
    p.table_x.set_requires_grad(false);
    p.table_y.set_requires_grad(false);
  }
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.layers.resize(cfg.layers);
  Rng rng(derive_seed(seed, stream::kInit));
  const auto shapes = expected_shapes(cfg);
  auto named = p.named();
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor t(shapes[i].shape);
    if (is_gain(shapes[i].name)) {
      t.fill(1.0);
    } else if (!is_bias_like(shapes[i].name)) {
      for (auto& v : t.data()) v = rng.truncated_normal(0.02);
    }
    *named[i].second = std::move(t);
  }
  apply_modality(cfg, p);
  return p;
}

ModelParams init_from_text_checkpoint(const ModelConfig& cfg, const ModelConfig& text_cfg,
                                      const ModelParams& text_params, std::uint64_t seed) {
  std::vector<std::string> diffs;
  auto cmp = [&](const char* field, std::size_t a, std::size_t b) {
    if (a != b) diffs.push_back(std::string(field) + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  };
  cmp("vocab_size", cfg.vocab_size, text_cfg.vocab_size);
  cmp("hidden", cfg.hidden, text_cfg.hidden);
  cmp("layers", cfg.layers, text_cfg.layers);
  cmp("heads", cfg.heads, text_cfg.heads);
  cmp("max_len", cfg.max_len, text_cfg.max_len);
  cmp("ffn_dim", cfg.ffn_dim, text_cfg.ffn_dim);
  if (!diffs.empty()) {
    std::string msg = "text checkpoint is incompatible; differing fields:";
    for (const auto& d : diffs) msg += " " + d;
    throw ConfigError(msg);
  }
  text_params.validate(text_cfg);

  ModelParams p = init_params(cfg, derive_seed(seed, stream::kInitFresh));
  auto dst = p.named();
  const auto src = text_params.named();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!is_text_backbone_tensor(dst[i].first)) continue;
    const bool rg = dst[i].second->requires_grad();
    *dst[i].second = *src[i].second;
    dst[i].second->set_requires_grad(rg);
  }
  return p;
}

// ------------------------------------------------------------------ binding

BoundParams::BoundParams(ag::Graph& g, const ModelParams& p) : g_(&g) {
  word = g.leaf(p.word_table);
  pos1d = g.leaf(p.pos1d_table);
  segment = g.leaf(p.segment_table);
  table_x = g.leaf(p.table_x);
  table_y = g.leaf(p.table_y);
  for (const auto& L : p.layers) {
    layers.push_back(Layer{g.leaf(L.wq), g.leaf(L.bq), g.leaf(L.wk), g.leaf(L.bk), g.leaf(L.wv), g.leaf(L.bv),
                           g.leaf(L.wo), g.leaf(L.bo), g.leaf(L.ln1_gamma), g.leaf(L.ln1_beta), g.leaf(L.w1),
                           g.leaf(L.b1), g.leaf(L.w2), g.leaf(L.b2), g.leaf(L.ln2_gamma), g.leaf(L.ln2_beta)});
  }
  mvlm_bias = g.leaf(p.mvlm_bias);
  mdc_w = g.leaf(p.mdc_w);
  mdc_b = g.leaf(p.mdc_b);
  seqlabel_w = g.leaf(p.seqlabel_w);
  seqlabel_b = g.leaf(p.seqlabel_b);
  docclass_w = g.leaf(p.docclass_w);
  docclass_b = g.leaf(p.docclass_b);
  img_proj_w = g.leaf(p.img_proj_w);
  img_proj_b = g.leaf(p.img_proj_b);
}

std::vector<Tensor> BoundParams::grads() const {
  std::vector<ag::Var> vars{word, pos1d, segment, table_x, table_y};
  for (const auto& L : layers) {
    vars.insert(vars.end(), {L.wq, L.bq, L.wk, L.bk, L.wv, L.bv, L.wo, L.bo, L.ln1_gamma, L.ln1_beta, L.w1, L.b1,
                             L.w2, L.b2, L.ln2_gamma, L.ln2_beta});
  }
  vars.insert(vars.end(),
              {mvlm_bias, mdc_w, mdc_b, seqlabel_w, seqlabel_b, docclass_w, docclass_b, img_proj_w, img_proj_b});
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(g_->grad(v));
  return out;
}

// ------------------------------------------------------------------ forward

namespace fwd {

ag::Var embed(BoundParams& p, const TokenSequence& s, std::size_t rows) {
  require(rows >= 1 && rows <= s.max_len(), "embed: row count out of range");
  const std::size_t vocab = p.word.value().rows();
  const std::size_t max_pos = p.pos1d.value().rows();
  std::vector<std::size_t> ids(rows), pos(rows), seg(rows), x0(rows), x1(rows), y0(rows), y1(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    require(s.ids[i] < vocab, "embed: token id " + std::to_string(s.ids[i]) + " >= vocab size");
    require(s.positions[i] < max_pos, "embed: position out of range");
    require(s.bboxes[i].valid(), "embed: box coordinates outside [0,1000] at token " + std::to_string(i));
    ids[i] = s.ids[i];
    pos[i] = s.positions[i];
    seg[i] = s.segments[i];
    x0[i] = static_cast<std::size_t>(s.bboxes[i].x0);
    x1[i] = static_cast<std::size_t>(s.bboxes[i].x1);
    y0[i] = static_cast<std::size_t>(s.bboxes[i].y0);
    y1[i] = static_cast<std::size_t>(s.bboxes[i].y1);
  }
  ag::Var h = ag::gather_rows(p.word, std::move(ids));
  h = ag::add(h, ag::gather_rows(p.pos1d, std::move(pos)));
  h = ag::add(h, ag::gather_rows(p.segment, std::move(seg)));
  h = ag::add(h, ag::gather_rows(p.table_x, std::move(x0)));
  h = ag::add(h, ag::gather_rows(p.table_y, std::move(y0)));
  h = ag::add(h, ag::gather_rows(p.table_x, std::move(x1)));
  h = ag::add(h, ag::gather_rows(p.table_y, std::move(y1)));
  return h;
}

namespace {
ag::Var attention_probs_var(BoundParams::Layer& L, const ModelConfig& cfg, ag::Var h,
                            const std::vector<unsigned char>& key_mask, std::size_t head) {
  const std::size_t dh = cfg.hidden / cfg.heads;
  ag::Var q = ag::add_bias(ag::matmul(h, L.wq), L.bq);
  ag::Var k = ag::add_bias(ag::matmul(h, L.wk), L.bk);
  ag::Var qh = ag::slice_cols(q, head * dh, dh);
  ag::Var kh = ag::slice_cols(k, head * dh, dh);
  return ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh))), key_mask);
}
}  // namespace

ag::Var encode(BoundParams& p, const ModelConfig& cfg, ag::Var h, const std::vector<unsigned char>& key_mask) {
  const std::size_t dh = cfg.hidden / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (auto& L : p.layers) {
    ag::Var q = ag::add_bias(ag::matmul(h, L.wq), L.bq);
    ag::Var k = ag::add_bias(ag::matmul(h, L.wk), L.bk);
    ag::Var v = ag::add_bias(ag::matmul(h, L.wv), L.bv);
    std::vector<ag::Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      ag::Var qh = ag::slice_cols(q, hd * dh, dh);
      ag::Var kh = ag::slice_cols(k, hd * dh, dh);
      ag::Var vh = ag::slice_cols(v, hd * dh, dh);
      ag::Var probs = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), key_mask);
      heads.push_back(ag::matmul(probs, vh));
    }
    ag::Var ctx = heads.size() == 1 ? heads[0] : ag::concat_cols(heads);
    ag::Var attn = ag::add_bias(ag::matmul(ctx, L.wo), L.bo);
    h = ag::layer_norm(ag::add(h, attn), L.ln1_gamma, L.ln1_beta, cfg.ln_eps);
    ag::Var ff = ag::gelu(ag::add_bias(ag::matmul(h, L.w1), L.b1));
    ff = ag::add_bias(ag::matmul(ff, L.w2), L.b2);
    h = ag::layer_norm(ag::add(h, ff), L.ln2_gamma, L.ln2_beta, cfg.ln_eps);
  }
  return h;
}

std::pair<ag::Var, ag::Var> fuse_image(BoundParams& p, const ModelConfig& cfg, ag::Var h,
                                       const ImageFeatures* features) {
  ag::Graph& g = p.graph();
  if (!cfg.use_image || features == nullptr) {
    return {h, g.leaf(Tensor(Shape{1, cfg.hidden}), false)};
  }
  const std::size_t rows = h.value().rows();
  require(features->tokens.rank() == 2 && features->tokens.rows() >= rows, "fuse_image: fewer feature rows than tokens");
  if (features->tokens.cols() != cfg.img_feat_dim || features->page.size() != cfg.img_feat_dim) {
    throw ShapeError("fuse_image: feature dimension " + std::to_string(features->tokens.cols()) +
                     " does not match img_feat_dim " + std::to_string(cfg.img_feat_dim));
  }
  require(features->is_word.size() >= rows, "fuse_image: word mask shorter than the sequence");
  const std::size_t dim = cfg.img_feat_dim;
  Tensor tok(Shape{rows, dim}, std::vector<double>(features->tokens.data().begin(),
                                                   features->tokens.data().begin() + static_cast<std::ptrdiff_t>(rows * dim)));
  std::vector<double> word_rows(rows);
  for (std::size_t i = 0; i < rows; ++i) word_rows[i] = features->is_word[i] ? 1.0 : 0.0;
  ag::Var proj = ag::add_bias(ag::matmul(g.leaf(std::move(tok), false), p.img_proj_w), p.img_proj_b);
  ag::Var fused = ag::add(h, ag::scale_rows(proj, std::move(word_rows)));
  Tensor page(Shape{1, dim}, std::vector<double>(features->page.data().begin(), features->page.data().end()));
  ag::Var cls_img = ag::add_bias(ag::matmul(g.leaf(std::move(page), false), p.img_proj_w), p.img_proj_b);
  return {fused, cls_img};
}

ag::Var mvlm_logits(BoundParams& p, ag::Var h, const std::vector<std::size_t>& positions) {
  for (auto pos : positions) require(pos < h.value().rows(), "mvlm_logits: position out of range");
  ag::Var rows = ag::gather_rows(h, positions);
  return ag::add_bias(ag::matmul_nt(rows, p.word), p.mvlm_bias);
}

ag::Var cls_vector(ag::Var h) { return ag::gather_rows(h, {0}); }

ag::Var mdc_logits(BoundParams& p, ag::Var cls) { return ag::add_bias(ag::matmul(cls, p.mdc_w), p.mdc_b); }

ag::Var seqlabel_logits(BoundParams& p, ag::Var h) {
  return ag::add_bias(ag::matmul(h, p.seqlabel_w), p.seqlabel_b);
}

ag::Var docclass_logits(BoundParams& p, ag::Var cls, ag::Var cls_image) {
  const ag::Var parts[] = {cls, cls_image};
  return ag::add_bias(ag::matmul(ag::concat_cols(parts), p.docclass_w), p.docclass_b);
}

}  // namespace fwd

// ------------------------------------------------------------------ tensor API

namespace {

std::vector<unsigned char> key_mask_of(std::span<const std::uint8_t> mask) {
  return std::vector<unsigned char>(mask.begin(), mask.end());
}

Tensor as_row(const Tensor& v) { return Tensor(Shape{1, v.size()}, v.storage()); }

}  // namespace

Tensor embed(const ModelParams& p, const ModelConfig& cfg, const TokenSequence& s) {
  (void)cfg;
  ag::Graph g;
  BoundParams b(g, p);
  return fwd::embed(b, s, s.max_len()).value();
}

Tensor encode(const ModelParams& p, const ModelConfig& cfg, const Tensor& h0, std::span<const std::uint8_t> mask) {
  require(mask.size() == h0.rows(), "encode: mask length must equal the row count");
  ag::Graph g;
  BoundParams b(g, p);
  return fwd::encode(b, cfg, g.leaf(h0, false), key_mask_of(mask)).value();
}

Tensor attention_probs(const ModelParams& p, const ModelConfig& cfg, const Tensor& h0,
                       std::span<const std::uint8_t> mask, std::size_t layer, std::size_t head) {
  require(layer < cfg.layers && head < cfg.heads, "attention_probs: layer/head out of range");
  ag::Graph g;
  BoundParams b(g, p);
  ag::Var h = g.leaf(h0, false);
  const auto km = key_mask_of(mask);
  for (std::size_t l = 0; l < layer; ++l) {
    BoundParams single = b;
    single.layers = {b.layers[l]};
    ModelConfig one = cfg;
    one.layers = 1;
    h = fwd::encode(single, one, h, km);
  }
  return fwd::attention_probs_var(b.layers[layer], cfg, h, km, head).value();
}

std::pair<Tensor, Tensor> fuse_image(const ModelParams& p, const ModelConfig& cfg, const Tensor& h,
                                     const ImageFeatures* features) {
  ag::Graph g;
  BoundParams b(g, p);
  auto [fused, cls_img] = fwd::fuse_image(b, cfg, g.leaf(h, false), features);
  return {fused.value(), Tensor(Shape{cfg.hidden}, cls_img.value().storage())};
}

Tensor mvlm_logits(const ModelParams& p, const Tensor& h, std::span<const std::size_t> positions) {
  if (positions.empty()) return Tensor();
  ag::Graph g;
  BoundParams b(g, p);
  return fwd::mvlm_logits(b, g.leaf(h, false), std::vector<std::size_t>(positions.begin(), positions.end())).value();
}

Tensor mdc_logits(const ModelParams& p, const Tensor& cls_vector) {
  ag::Graph g;
  BoundParams b(g, p);
  const Tensor out = fwd::mdc_logits(b, g.leaf(as_row(cls_vector), false)).value();
  return Tensor(Shape{out.size()}, out.storage());
}

Tensor seqlabel_logits(const ModelParams& p, const Tensor& h) {
  ag::Graph g;
  BoundParams b(g, p);
  return fwd::seqlabel_logits(b, g.leaf(h, false)).value();
}

Tensor docclass_logits(const ModelParams& p, const Tensor& cls_vector, const Tensor& cls_image) {
  require(cls_vector.size() == cls_image.size(), "docclass_logits: cls and image vectors must both be length hidden");
  ag::Graph g;
  BoundParams b(g, p);
  const Tensor out = fwd::docclass_logits(b, g.leaf(as_row(cls_vector), false), g.leaf(as_row(cls_image), false)).value();
  return Tensor(Shape{out.size()}, out.storage());
}

std::size_t argmax(std::span<const double> row) {
  require(!row.empty(), "argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace geotext
