#include <cmath>

#include "doctest.h"
#include "geotext/error.hpp"
#include "geotext/metrics.hpp"
#include "geotext/ops.hpp"
#include "geotext/model.hpp"
#include "model_fixtures.hpp"

using namespace geotext;
using namespace geotext::testing;

namespace {

Tensor manual_embed(const ModelParams& p, const TokenSequence& s) {
  const std::size_t h = p.word_table.cols();
  Tensor out(Shape{s.max_len(), h});
  for (std::size_t i = 0; i < s.max_len(); ++i) {
    const auto& b = s.bboxes[i];
    for (std::size_t j = 0; j < h; ++j) {
      out.at(i, j) = p.word_table.at(s.ids[i], j) + p.pos1d_table.at(s.positions[i], j) +
                     p.segment_table.at(s.segments[i], j) + p.table_x.at(b.x0, j) + p.table_y.at(b.y0, j) +
                     p.table_x.at(b.x1, j) + p.table_y.at(b.y1, j);
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool row_equal(const Tensor& a, const Tensor& b, std::size_t r) {
  for (std::size_t j = 0; j < a.cols(); ++j)
    if (a.at(r, j) != b.at(r, j)) return false;
  return true;
}

}  // namespace

TEST_CASE("embedding is the seven-term sum") {
  const auto c = tiny_config();
  const auto p = random_params(c, 1);
  const auto s = random_sequence(c, 9, 2);
  CHECK(max_abs_diff(embed(p, c, s), manual_embed(p, s)) < 1e-14);

  ModelParams only_word = p;
  for (Tensor* t : {&only_word.pos1d_table, &only_word.segment_table, &only_word.table_x, &only_word.table_y})
    t->fill(0.0);
  const Tensor e = embed(only_word, c, s);
  for (std::size_t i = 0; i < c.max_len; ++i)
    for (std::size_t j = 0; j < c.hidden; ++j) CHECK(e.at(i, j) == p.word_table.at(s.ids[i], j));
}

TEST_CASE("perturbing one row of the x table touches exactly the tokens using it") {
  const auto c = tiny_config();
  const auto p = random_params(c, 3);
  const auto s = random_sequence(c, 11, 4);
  const Tensor base = embed(p, c, s);
  for (int k : {0, 3, 17, 250, 500, 999, 1000, 42}) {
    ModelParams q = p;
    for (auto& v : q.table_x.row(static_cast<std::size_t>(k))) v += 1.0;
    const Tensor e = embed(q, c, s);
    for (std::size_t i = 0; i < c.max_len; ++i) {
      const bool uses = s.bboxes[i].x0 == k || s.bboxes[i].x1 == k;
      CHECK(row_equal(base, e, i) == !uses);
    }
  }
}

TEST_CASE("two tokens differing only in box differ by the 2-D lookups") {
  const auto c = tiny_config();
  const auto p = random_params(c, 5);
  auto s = random_sequence(c, 6, 6);
  auto t = s;
  t.bboxes[2] = BBox{17, 3, 500, 999};
  const Tensor a = embed(p, c, s), b = embed(p, c, t);
  const auto& u = s.bboxes[2];
  const auto& v = t.bboxes[2];
  for (std::size_t j = 0; j < c.hidden; ++j) {
    const double delta = (p.table_x.at(v.x0, j) + p.table_x.at(v.x1, j) + p.table_y.at(v.y0, j) + p.table_y.at(v.y1, j)) -
                         (p.table_x.at(u.x0, j) + p.table_x.at(u.x1, j) + p.table_y.at(u.y0, j) + p.table_y.at(u.y1, j));
    CHECK(std::abs((b.at(2, j) - a.at(2, j)) - delta) < 1e-12);
  }
  for (std::size_t i = 0; i < c.max_len; ++i)
    if (i != 2) CHECK(row_equal(a, b, i));
}

TEST_CASE("embedding contracts") {
  const auto c = tiny_config();
  const auto p = init_params(c, 1);
  auto s = random_sequence(c, 5, 1);
  s.ids[1] = static_cast<std::uint32_t>(c.vocab_size);
  CHECK_THROWS_AS(embed(p, c, s), ContractError);
  s = random_sequence(c, 5, 1);
  s.bboxes[1] = BBox{0, 0, 1001, 5};
  CHECK_THROWS_AS(embed(p, c, s), ContractError);
}

TEST_CASE("encoder") {
  SUBCASE("zero layers is the identity") {
    const auto c = tiny_config(0);
    const auto p = random_params(c, 7);
    const auto s = random_sequence(c, 8, 8);
    const Tensor h0 = embed(p, c, s);
    CHECK(encode(p, c, h0, s.mask) == h0);
  }
  SUBCASE("attention rows sum to one and ignore padding keys") {
    const auto c = tiny_config();
    const auto p = random_params(c, 9);
    const auto s = random_sequence(c, 7, 10);
    const Tensor h0 = embed(p, c, s);
    for (std::size_t layer = 0; layer < c.layers; ++layer)
      for (std::size_t head = 0; head < c.heads; ++head) {
        const Tensor a = attention_probs(p, c, h0, s.mask, layer, head);
        for (std::size_t r = 0; r < 7; ++r) {
          double sum = 0.0;
          for (std::size_t k = 0; k < c.max_len; ++k) {
            if (!s.mask[k]) CHECK(a.at(r, k) == 0.0);
            sum += a.at(r, k);
          }
          CHECK(std::abs(sum - 1.0) < 1e-10);
        }
      }
  }
  SUBCASE("padding content never reaches real positions") {
    const auto c = tiny_config();
    const auto p = random_params(c, 11);
    auto s = random_sequence(c, 6, 12);
    const Tensor a = encode(p, c, embed(p, c, s), s.mask);
    for (std::size_t i = 6; i < c.max_len; ++i) {
      s.ids[i] = 17;
      s.bboxes[i] = BBox{3, 3, 500, 999};
    }
    const Tensor b = encode(p, c, embed(p, c, s), s.mask);
    for (std::size_t i = 0; i < 6; ++i) CHECK(row_equal(a, b, i));
  }
  SUBCASE("training path over the real prefix equals the masked full-length path") {
    const auto c = tiny_config();
    const auto p = random_params(c, 13);
    const auto s = random_sequence(c, 9, 14);
    const Tensor full = encode(p, c, embed(p, c, s), s.mask);
    ag::Graph g;
    BoundParams b(g, p);
    const Tensor prefix = fwd::encode(b, c, fwd::embed(b, s, 9), {}).value();
    for (std::size_t i = 0; i < 9; ++i) CHECK(row_equal(full, prefix, i));
  }
}

TEST_CASE("image fusion") {
  auto c = tiny_config();
  c.use_image = true;
  const auto p = random_params(c, 15);
  const auto s = random_sequence(c, 9, 16);
  const Tensor h = encode(p, c, embed(p, c, s), s.mask);

  SUBCASE("zero features and zero projection bias leave states unchanged") {
    ModelParams q = p;
    q.img_proj_b.fill(0.0);
    ImageFeatures f = random_features(c, s, 1);
    f.tokens.fill(0.0);
    const auto [fused, cls_img] = fuse_image(q, c, h, &f);
    CHECK(fused == h);
  }
  SUBCASE("one nonzero feature changes one row") {
    ModelParams q = p;
    q.img_proj_b.fill(0.0);
    ImageFeatures f = random_features(c, s, 2);
    f.tokens.fill(0.0);
    f.tokens.at(4, 1) = 0.7;
    const auto [fused, cls_img] = fuse_image(q, c, h, &f);
    for (std::size_t i = 0; i < c.max_len; ++i) CHECK(row_equal(fused, h, i) == (i != 4));
  }
  SUBCASE("special and padding rows are never touched") {
    const ImageFeatures f = random_features(c, s, 3);
    const auto [fused, cls_img] = fuse_image(p, c, h, &f);
    for (std::size_t i = 0; i < c.max_len; ++i) CHECK(row_equal(fused, h, i) == (s.word_ids[i] < 0));
    const Tensor page_proj = matmul(f.page, p.img_proj_w);
    for (std::size_t j = 0; j < c.hidden; ++j)
      CHECK(std::abs(cls_img.data()[j] - (page_proj.data()[j] + p.img_proj_b.data()[j])) < 1e-14);
  }
  SUBCASE("text-only mode is the identity with a zero image embedding") {
    auto t = c;
    t.use_image = false;
    const ImageFeatures f = random_features(c, s, 4);
    const auto [fused, cls_img] = fuse_image(p, t, h, &f);
    CHECK(fused == h);
    for (double v : cls_img.data()) CHECK(v == 0.0);
  }
  SUBCASE("dimension mismatch") {
    ImageFeatures f = random_features(c, s, 5);
    f.tokens = Tensor(Shape{c.max_len, c.img_feat_dim + 1});
    CHECK_THROWS_AS(fuse_image(p, c, h, &f), ShapeError);
  }
}

TEST_CASE("heads") {
  const auto c = tiny_config();
  ModelParams p = random_params(c, 17);
  const auto s = random_sequence(c, 9, 18);
  const Tensor h = encode(p, c, embed(p, c, s), s.mask);

  SUBCASE("mvlm") {
    ModelParams z = p;
    z.mvlm_bias.fill(0.0);
    const std::size_t pos[] = {1, 3};
    const Tensor zl = mvlm_logits(z, Tensor(Shape{c.max_len, c.hidden}), pos);
    for (double v : zl.data()) CHECK(v == 0.0);
    CHECK(mvlm_logits(p, h, {}).size() == 0);
    const std::size_t bad[] = {c.max_len};
    CHECK_THROWS_AS(mvlm_logits(p, h, bad), ContractError);

    const Tensor before = mvlm_logits(p, h, pos);
    ModelParams q = p;
    for (auto& v : q.word_table.row(7)) v += 0.5;
    const Tensor after = mvlm_logits(q, h, pos);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t t = 0; t < c.vocab_size; ++t) CHECK((after.at(r, t) != before.at(r, t)) == (t == 7));
  }
  SUBCASE("mdc") {
    ModelParams z = p;
    z.mdc_w.fill(0.0);
    z.mdc_b.fill(0.0);
    const Tensor l = mdc_logits(z, Tensor(Shape{c.hidden}, std::vector<double>(h.row(0).begin(), h.row(0).end())));
    CHECK(l.size() == c.num_mdc_tags);
    for (double v : l.data()) CHECK(v == 0.0);
  }
  SUBCASE("seqlabel zero head ties go to the lowest index") {
    ModelParams z = p;
    z.seqlabel_w.fill(0.0);
    z.seqlabel_b.fill(0.0);
    const Tensor l = seqlabel_logits(z, h);
    for (std::size_t i = 0; i < c.max_len; ++i) CHECK(argmax(l.row(i)) == 0);
    const std::vector<std::string> funsd{"question", "answer", "header"};
    CHECK(make_bieso_tagset(funsd).size() == 13);
  }
  SUBCASE("docclass") {
    ModelParams z = p;
    z.docclass_w.fill(0.0);
    z.docclass_b.fill(0.0);
    const Tensor cls(Shape{c.hidden}, std::vector<double>(h.row(0).begin(), h.row(0).end()));
    const Tensor l = docclass_logits(z, cls, Tensor(Shape{c.hidden}));
    for (double v : l.data()) CHECK(v == 0.0);
    // Text-only: the image half contributes nothing whatever its weights.
    const Tensor a = docclass_logits(p, cls, Tensor(Shape{c.hidden}));
    ModelParams q = p;
    for (std::size_t r = c.hidden; r < 2 * c.hidden; ++r)
      for (auto& v : q.docclass_w.row(r)) v = 9.0;
    CHECK(docclass_logits(q, cls, Tensor(Shape{c.hidden})) == a);
  }
}

TEST_CASE("initialization") {
  const auto c = tiny_config();
  const ModelParams a = init_params(c, 3), b = init_params(c, 3), d = init_params(c, 4);
  CHECK(a == b);
  CHECK(!(a.word_table == d.word_table));
  CHECK_NOTHROW(a.validate(c));
  for (const auto& [name, t] : a.named()) {
    const bool is_gain = name.find("gamma") != std::string::npos;
    for (double v : t->data()) {
      if (is_gain) {
        CHECK(v == 1.0);
      } else {
        CHECK(std::abs(v) <= 0.04);
      }
    }
  }
  for (double v : a.mvlm_bias.data()) CHECK(v == 0.0);
  for (double v : a.layers[0].bq.data()) CHECK(v == 0.0);
}

TEST_CASE("layout switch zeroes and freezes the 2-D tables") {
  auto c = tiny_config();
  c.use_layout = false;
  const auto p = init_params(c, 5);
  for (double v : p.table_x.data()) CHECK(v == 0.0);
  CHECK(!p.table_x.requires_grad());
  CHECK(!p.table_y.requires_grad());
  auto s = random_sequence(c, 8, 6);
  auto t = s;
  for (std::size_t i = 1; i < 7; ++i) t.bboxes[i] = BBox{1, 2, 3, 4};
  CHECK(embed(p, c, s) == embed(p, c, t));
  // Same shapes as the layout model.
  auto cl = c;
  cl.use_layout = true;
  const auto q = init_params(cl, 5);
  const auto na = p.named(), nb = q.named();
  REQUIRE(na.size() == nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) CHECK(na[i].second->shape() == nb[i].second->shape());
}

TEST_CASE("init from a text checkpoint") {
  auto text_cfg = tiny_config();
  text_cfg.use_layout = false;
  const auto text = random_params(text_cfg, 21);
  auto cfg = text_cfg;
  cfg.use_layout = true;
  const auto p = init_from_text_checkpoint(cfg, text_cfg, text, 22);
  const auto dst = p.named();
  const auto src = text.named();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (is_text_backbone_tensor(dst[i].first)) {
      CHECK(dst[i].second->data().size() == src[i].second->data().size());
      CHECK(std::equal(dst[i].second->data().begin(), dst[i].second->data().end(), src[i].second->data().begin()));
    }
  }
  CHECK(!(p.table_x == text.table_x));
  CHECK(!(p.table_x == text.table_y));
  CHECK(p.table_x.requires_grad());
  CHECK(init_from_text_checkpoint(cfg, text_cfg, text, 22) == p);

  auto wrong = cfg;
  wrong.hidden = 8;
  wrong.heads = 2;
  wrong.ffn_dim = 16;
  try {
    (void)init_from_text_checkpoint(wrong, text_cfg, text, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("hidden") != std::string::npos);
    CHECK(msg.find("ffn_dim") != std::string::npos);
  }
}

TEST_CASE("config text round trip and validation") {
  auto c = tiny_config();
  c.use_image = true;
  CHECK(ModelConfig::from_text(c.to_text()) == c);
  auto bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS(ModelConfig::from_text("layers=two\n"));
}

TEST_CASE("sixteen-way document classification config") {
  auto c = tiny_config();
  c.num_doc_classes = 16;
  CHECK_NOTHROW(c.validate());
  const ModelParams p = init_params(c, 3);
  CHECK(p.docclass_w.shape() == Shape{2 * c.hidden, 16});
  CHECK(p.docclass_b.shape() == Shape{16});
  const Tensor cls(Shape{c.hidden}, std::vector<double>(c.hidden, 0.1));
  const Tensor img(Shape{c.hidden}, std::vector<double>(c.hidden, -0.2));
  CHECK(docclass_logits(p, cls, img).size() == 16);
}
