#include <cmath>
#include <sstream>

#include "doctest.h"
#include "geotext/error.hpp"
#include "geotext/pretrain.hpp"
#include "geotext/synth.hpp"
#include "model_fixtures.hpp"

using namespace geotext;
using namespace geotext::testing;

namespace {

struct Setup {
  Vocabulary vocab;
  ModelConfig cfg;
  std::vector<PretrainExample> corpus;
};

Setup make_setup(std::size_t n_docs = 24) {
  const auto docs = synth::gen_pretrain_documents(n_docs, 77);
  const auto words = synth::corpus_words(docs);
  Setup s{build_vocab(words, 120), tiny_config(1, 16), {}};
  s.cfg.vocab_size = s.vocab.size();
  s.cfg.max_len = 24;
  s.corpus = synth::to_pretrain_examples(docs, s.vocab, s.cfg.max_len);
  return s;
}

}  // namespace

TEST_CASE("masking policy validation") {
  MaskingPolicy p;
  CHECK_NOTHROW(p.validate());
  p.p_keep = 0.2;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.select_rate = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("masking only rewrites ids at selected positions") {
  const Setup s = make_setup();
  MaskingPolicy zero;
  zero.select_rate = 0.0;
  Rng rng(1);
  for (const auto& ex : s.corpus) {
    const auto m = apply_masking(ex.sequence, s.vocab, zero, rng);
    CHECK(m.sequence == ex.sequence);
    CHECK(m.targets.empty());
  }
  MaskingPolicy heavy;
  heavy.select_rate = 0.9;
  for (const auto& ex : s.corpus) {
    const auto m = apply_masking(ex.sequence, s.vocab, heavy, rng);
    CHECK(m.sequence.bboxes == ex.sequence.bboxes);
    CHECK(m.sequence.positions == ex.sequence.positions);
    CHECK(m.sequence.segments == ex.sequence.segments);
    CHECK(m.sequence.mask == ex.sequence.mask);
    std::vector<bool> selected(ex.sequence.max_len(), false);
    for (const auto& t : m.targets) {
      REQUIRE(t.position < ex.sequence.max_len());
      selected[t.position] = true;
      CHECK(ex.sequence.mask[t.position] == 1);
      CHECK(!s.vocab.is_special(ex.sequence.ids[t.position]));
      CHECK(t.original_id == ex.sequence.ids[t.position]);
      const auto now = m.sequence.ids[t.position];
      switch (t.how) {
        case Replacement::Mask: CHECK(now == s.vocab.mask_id()); break;
        case Replacement::Keep: CHECK(now == t.original_id); break;
        case Replacement::Random: CHECK(!s.vocab.is_special(now)); break;
      }
    }
    for (std::size_t i = 0; i < selected.size(); ++i)
      if (!selected[i]) CHECK(m.sequence.ids[i] == ex.sequence.ids[i]);
  }
}

TEST_CASE("masking rates on a moderate sample") {
  const Setup s = make_setup(400);
  MaskingPolicy p;
  Rng rng(5);
  std::size_t maskable = 0, selected = 0, n_mask = 0, n_random = 0, n_keep = 0;
  for (int rep = 0; rep < 5; ++rep)
    for (const auto& ex : s.corpus) {
      for (std::size_t i = 0; i < ex.sequence.max_len(); ++i)
        maskable += ex.sequence.mask[i] && !s.vocab.is_special(ex.sequence.ids[i]);
      const auto m = apply_masking(ex.sequence, s.vocab, p, rng);
      selected += m.targets.size();
      for (const auto& t : m.targets) {
        n_mask += t.how == Replacement::Mask;
        n_random += t.how == Replacement::Random;
        n_keep += t.how == Replacement::Keep;
      }
    }
  REQUIRE(maskable > 20000);
  const double rate = static_cast<double>(selected) / maskable;
  CHECK(rate > 0.13);
  CHECK(rate < 0.17);
  CHECK(std::abs(static_cast<double>(n_mask) / selected - 0.8) < 0.03);
  CHECK(std::abs(static_cast<double>(n_random) / selected - 0.1) < 0.03);
  CHECK(std::abs(static_cast<double>(n_keep) / selected - 0.1) < 0.03);
}

TEST_CASE("mvlm loss") {
  const Setup s = make_setup();
  const ModelParams p = init_params(s.cfg, 3);
  Rng rng(9);
  MaskingPolicy heavy;
  heavy.select_rate = 0.5;
  const auto m = apply_masking(s.corpus[0].sequence, s.vocab, heavy, rng);
  REQUIRE(!m.targets.empty());
  const double fresh = mvlm_loss(p, s.cfg, m.sequence, m.targets);
  CHECK(std::abs(fresh - std::log(static_cast<double>(s.cfg.vocab_size))) < 0.05 * std::log(s.cfg.vocab_size));

  // Depends only on the masked input and the targets.
  auto other = m.targets;
  CHECK(mvlm_loss(p, s.cfg, m.sequence, other) == fresh);

  const auto before = mvlm_empty_target_count();
  CHECK(mvlm_loss(p, s.cfg, m.sequence, {}) == 0.0);
  CHECK(mvlm_empty_target_count() == before + 1);

  // A bias that makes every target id dominant drives the loss to ~0.
  ModelParams q = p;
  q.mvlm_bias.fill(-1e3);
  std::vector<MaskTarget> one{m.targets[0]};
  q.mvlm_bias.data()[one[0].original_id] = 1e3;
  CHECK(mvlm_loss(q, s.cfg, m.sequence, one) < 1e-9);
}

TEST_CASE("mdc loss") {
  const auto c = tiny_config();
  ModelParams p = init_params(c, 4);
  p.mdc_w.fill(0.0);
  p.mdc_b.fill(0.0);
  const Tensor cls(Shape{c.hidden});
  CHECK(mdc_loss(p, cls, {true, false, true, false}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  for (std::size_t i = 0; i < c.num_mdc_tags; ++i) p.mdc_b.data()[i] = i % 2 ? -40.0 : 40.0;
  CHECK(mdc_loss(p, cls, {true, false, true, false}) < 1e-6);
  p.mdc_b.fill(-40.0);
  CHECK(mdc_loss(p, cls, {false, false, false, false}) < 1e-6);
  CHECK_THROWS(mdc_loss(p, cls, {true}));
}

TEST_CASE("pretraining loop contracts") {
  const Setup s = make_setup();
  OptimizerConfig opt;
  opt.initial_lr = 1e-3;
  PretrainOptions o;
  o.steps = 0;
  o.seed = 12;
  auto r0 = run_pretrain(s.corpus, s.vocab, s.cfg, opt, o);
  CHECK(r0.checkpoint.params == init_params(s.cfg, 12));
  CHECK(r0.curve.empty());

  o.steps = 4;
  const auto a = run_pretrain(s.corpus, s.vocab, s.cfg, opt, o);
  const auto b = run_pretrain(s.corpus, s.vocab, s.cfg, opt, o);
  CHECK(a.checkpoint == b.checkpoint);
  REQUIRE(a.curve.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.curve[i].mvlm == b.curve[i].mvlm);
    CHECK(a.curve[i].mdc == 0.0);
  }
  // MDC off: the MDC head never moves.
  CHECK(a.checkpoint.params.mdc_w == r0.checkpoint.params.mdc_w);
  CHECK(a.checkpoint.params.mdc_b == r0.checkpoint.params.mdc_b);
  CHECK(!(a.checkpoint.params.word_table == r0.checkpoint.params.word_table));

  o.objectives.mdc = true;
  const auto with_mdc = run_pretrain(s.corpus, s.vocab, s.cfg, opt, o);
  CHECK(!(with_mdc.checkpoint.params.mdc_w == r0.checkpoint.params.mdc_w));
  CHECK(with_mdc.curve[0].mdc > 0.0);

  auto untagged = s.corpus;
  untagged[5].mdc_tags.reset();
  try {
    (void)run_pretrain(untagged, s.vocab, s.cfg, opt, o);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(untagged[5].sequence.doc_id) != std::string::npos);
  }

  auto wrong_vocab = s.cfg;
  wrong_vocab.vocab_size += 1;
  CHECK_THROWS_AS(run_pretrain(s.corpus, s.vocab, wrong_vocab, opt, o), ConfigError);
}

TEST_CASE("resume reproduces the uninterrupted run") {
  const Setup s = make_setup();
  OptimizerConfig opt;
  opt.initial_lr = 1e-3;
  PretrainOptions full;
  full.steps = 7;
  full.batch_size = 5;  // 24 docs: epochs wrap mid-run
  full.seed = 3;
  full.objectives.mdc = true;
  const auto whole = run_pretrain(s.corpus, s.vocab, s.cfg, opt, full);

  PretrainOptions first = full;
  first.stop_after = 3;
  const auto part = run_pretrain(s.corpus, s.vocab, s.cfg, opt, first);
  REQUIRE(part.checkpoint.optimizer);
  CHECK(part.checkpoint.optimizer->steps_taken == 3);

  PretrainOptions second = full;
  second.resume = deserialize_checkpoint(serialize_checkpoint(part.checkpoint));
  const auto rest = run_pretrain(s.corpus, s.vocab, s.cfg, opt, second);
  CHECK(rest.checkpoint == whole.checkpoint);
  REQUIRE(rest.curve.size() == 4);
  CHECK(rest.curve[0].step == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rest.curve[i].mvlm == whole.curve[i + 3].mvlm);
    CHECK(rest.curve[i].lr == whole.curve[i + 3].lr);
  }
}

TEST_CASE("loss curve format") {
  std::ostringstream os;
  const LossRecord recs[] = {{1, 5e-5, 6.25, 0.5}, {2, 2.5e-5, 1.0 / 3.0, 0.0}};
  write_loss_curve(os, recs);
  CHECK(os.str() == "1\t5.0000000000000002e-05\t6.25\t0.5\n2\t2.5000000000000001e-05\t0.33333333333333331\t0\n");
}
