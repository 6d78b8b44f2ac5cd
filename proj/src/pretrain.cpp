#include "geotext/pretrain.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "geotext/error.hpp"

namespace geotext {

namespace {
std::atomic<std::uint64_t> g_empty_targets{0};
}

void MaskingPolicy::validate() const {
  // select_rate 0 is accepted: it turns masking into the identity.
  if (!(select_rate >= 0.0 && select_rate < 1.0)) throw ConfigError("masking: select_rate must be in [0,1)");
  if (!(p_mask >= 0.0 && p_random >= 0.0 && p_keep >= 0.0))
    throw ConfigError("masking: proportions must be non-negative");
  if (!(std::abs(p_mask + p_random + p_keep - 1.0) < 1e-9))
    throw ConfigError("masking: p_mask + p_random + p_keep must equal 1");
}

MaskedSequence apply_masking(const TokenSequence& s, const Vocabulary& vocab, const MaskingPolicy& policy, Rng& rng) {
  // select_rate == 0 is accepted here as "no masking" even though training
  // configs require a positive rate.
  require(policy.select_rate >= 0.0 && policy.select_rate < 1.0, "masking: select_rate must be in [0,1)");
  require(std::abs(policy.p_mask + policy.p_random + policy.p_keep - 1.0) < 1e-9,
          "masking: p_mask + p_random + p_keep must equal 1");
  MaskedSequence out{s, {}};
  std::vector<std::uint32_t> pool;
  for (std::uint32_t id = 0; id < vocab.size(); ++id) {
    if (!vocab.is_special(id)) pool.push_back(id);
  }
  for (std::size_t i = 0; i < s.max_len(); ++i) {
    if (!s.mask[i] || vocab.is_special(s.ids[i])) continue;
    if (!rng.bernoulli(policy.select_rate)) continue;
    const double u = rng.uniform();
    MaskTarget t{i, s.ids[i], Replacement::Keep};
    if (u < policy.p_mask) {
      t.how = Replacement::Mask;
      out.sequence.ids[i] = vocab.mask_id();
    } else if (u < policy.p_mask + policy.p_random) {
      t.how = Replacement::Random;
      out.sequence.ids[i] = pool[rng.below(pool.size())];
    }
    out.targets.push_back(t);
  }
  return out;
}

ag::Var encode_sequence(BoundParams& b, const ModelConfig& cfg, const TokenSequence& s) {
  const std::size_t n = s.real_length();
  require(n >= 1, "encode_sequence: sequence has no real tokens");
  ag::Var h0 = fwd::embed(b, s, n);
  return fwd::encode(b, cfg, h0, {});
}

ag::Var mvlm_loss_var(BoundParams& b, ag::Var h, std::span<const MaskTarget> targets) {
  require(!targets.empty(), "mvlm_loss_var: no targets");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> ids;
  for (const auto& t : targets) {
    pos.push_back(t.position);
    ids.push_back(t.original_id);
  }
  return ag::cross_entropy(fwd::mvlm_logits(b, h, pos), std::move(ids));
}

ag::Var mdc_loss_var(BoundParams& b, ag::Var h, const std::vector<bool>& tags) {
  const std::size_t n = b.mdc_b.value().size();
  require(tags.size() == n, "mdc_loss: tag bitset length " + std::to_string(tags.size()) + " != num_mdc_tags " +
                                std::to_string(n));
  std::vector<double> t(tags.begin(), tags.end());
  return ag::bce_with_logits(fwd::mdc_logits(b, fwd::cls_vector(h)), std::move(t));
}

double mvlm_loss(const ModelParams& p, const ModelConfig& cfg, const TokenSequence& masked,
                 std::span<const MaskTarget> targets) {
  if (targets.empty()) {
    ++g_empty_targets;
    return 0.0;
  }
  ag::Graph g;
  BoundParams b(g, p);
  return mvlm_loss_var(b, encode_sequence(b, cfg, masked), targets).value().item();
}

std::uint64_t mvlm_empty_target_count() { return g_empty_targets.load(); }

double mdc_loss(const ModelParams& p, const Tensor& cls_vector, const std::vector<bool>& tags) {
  ag::Graph g;
  BoundParams b(g, p);
  ag::Var cls = g.leaf(Tensor(Shape{1, cls_vector.size()}, cls_vector.storage()), false);
  std::vector<double> t(tags.begin(), tags.end());
  require(tags.size() == p.mdc_b.size(), "mdc_loss: tag bitset length does not match num_mdc_tags");
  return ag::bce_with_logits(fwd::mdc_logits(b, cls), std::move(t)).value().item();
}

void write_loss_curve(std::ostream& os, std::span<const LossRecord> records) {
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%llu\t%.17g\t%.17g\t%.17g\n", static_cast<unsigned long long>(r.step), r.lr,
                  r.mvlm, r.mdc);
    os << buf;
  }
}

namespace {

/// Example indices of global step t (1-based) under per-epoch shuffling.
std::vector<std::size_t> batch_for_step(std::size_t n, std::size_t batch, std::uint64_t seed, std::uint64_t t) {
  const std::uint64_t per_epoch = (n + batch - 1) / batch;
  const std::uint64_t epoch = (t - 1) / per_epoch;
  const std::uint64_t j = (t - 1) % per_epoch;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(seed, stream::kShuffle), epoch));
  rng.shuffle(order.begin(), order.end());
  const std::size_t begin = static_cast<std::size_t>(j * batch);
  const std::size_t end = std::min(n, begin + batch);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

}  // namespace

PretrainResult run_pretrain(std::span<const PretrainExample> corpus, const Vocabulary& vocab, const ModelConfig& cfg,
                            OptimizerConfig opt, const PretrainOptions& options) {
  require(!corpus.empty(), "run_pretrain: empty corpus");
  require(options.batch_size >= 1, "run_pretrain: batch_size must be >= 1");
  require(options.objectives.mvlm || options.objectives.mdc, "run_pretrain: no objective enabled");
  cfg.validate();
  options.masking.validate();
  if (vocab.size() != cfg.vocab_size) {
    throw ConfigError("run_pretrain: vocabulary has " + std::to_string(vocab.size()) + " tokens, config says " +
                      std::to_string(cfg.vocab_size));
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& ex = corpus[i];
    if (ex.sequence.max_len() != cfg.max_len) {
      throw DataError("pretrain example " + std::to_string(i) + " (" + ex.sequence.doc_id + ") has length " +
                      std::to_string(ex.sequence.max_len()) + ", config max_len is " + std::to_string(cfg.max_len));
    }
    ex.sequence.validate(vocab.pad_id());
    if (options.objectives.mdc) {
      if (!ex.mdc_tags) {
        throw DataError("MDC enabled but pretrain example " + std::to_string(i) + " (" + ex.sequence.doc_id +
                        ") has no tags");
      }
      if (ex.mdc_tags->size() != cfg.num_mdc_tags) {
        throw DataError("pretrain example " + std::to_string(i) + " (" + ex.sequence.doc_id + ") has " +
                        std::to_string(ex.mdc_tags->size()) + " tags, config expects " +
                        std::to_string(cfg.num_mdc_tags));
      }
    }
  }

  PretrainResult result;
  std::uint64_t first_step = 1;
  if (options.resume) {
    if (!(options.resume->config == cfg)) throw ConfigError("run_pretrain: resume checkpoint config differs from run config");
    result.checkpoint = *options.resume;
    if (result.checkpoint.optimizer) first_step = result.checkpoint.optimizer->steps_taken + 1;
  } else {
    result.checkpoint.config = cfg;
    result.checkpoint.params = init_params(cfg, options.seed);
  }
  Checkpoint& ck = result.checkpoint;
  if (options.steps == 0) return result;

  opt.total_steps = options.steps;
  opt.validate();
  auto params = ck.params.tensors();
  if (!ck.optimizer) ck.optimizer = AdamState::zeros_like(params);
  const std::uint64_t mask_seed = derive_seed(options.seed, stream::kMasking);

  const std::uint64_t last_step = options.stop_after ? std::min(options.steps, *options.stop_after) : options.steps;
  for (std::uint64_t step = first_step; step <= last_step; ++step) {
    const auto batch = batch_for_step(corpus.size(), options.batch_size, options.seed, step);
    Rng mask_rng(derive_seed(mask_seed, step));

    ag::Graph g;
    BoundParams b(g, ck.params);
    std::vector<ag::Var> mvlm_terms, mdc_terms;
    std::vector<std::size_t> mvlm_counts;
    std::size_t total_targets = 0;
    for (auto idx : batch) {
      const auto& ex = corpus[idx];
      MaskedSequence m = apply_masking(ex.sequence, vocab, options.masking, mask_rng);
      ag::Var h = encode_sequence(b, cfg, m.sequence);
      if (options.objectives.mvlm && !m.targets.empty()) {
        mvlm_terms.push_back(mvlm_loss_var(b, h, m.targets));
        mvlm_counts.push_back(m.targets.size());
        total_targets += m.targets.size();
      }
      if (options.objectives.mdc) mdc_terms.push_back(mdc_loss_var(b, h, *ex.mdc_tags));
    }

    // MVLM: mean over every masked token of the batch. MDC: mean over documents.
    ag::Var loss;
    double mvlm_value = 0.0, mdc_value = 0.0;
    if (!mvlm_terms.empty()) {
      ag::Var acc;
      for (std::size_t i = 0; i < mvlm_terms.size(); ++i) {
        ag::Var w = ag::scale(mvlm_terms[i], static_cast<double>(mvlm_counts[i]) / static_cast<double>(total_targets));
        acc = acc.valid() ? ag::add(acc, w) : w;
      }
      mvlm_value = acc.value().item();
      loss = acc;
    }
    if (!mdc_terms.empty()) {
      ag::Var acc;
      for (auto& t : mdc_terms) {
        ag::Var w = ag::scale(t, 1.0 / static_cast<double>(mdc_terms.size()));
        acc = acc.valid() ? ag::add(acc, w) : w;
      }
      mdc_value = acc.value().item();
      loss = loss.valid() ? ag::add(loss, acc) : acc;
    }

    std::vector<Tensor> grads;
    if (loss.valid()) {
      g.backward(loss);
      grads = b.grads();
    } else {
      for (auto* t : params) grads.emplace_back(t->shape());
    }
    const double lr = lr_at(opt, step);
    adam_step(params, grads, *ck.optimizer, opt, step);
    LossRecord rec{step, lr, mvlm_value, mdc_value};
    result.curve.push_back(rec);
    if (options.on_step) options.on_step(rec);
  }
  return result;
}

double heldout_mvlm_loss(const ModelParams& p, const ModelConfig& cfg, std::span<const PretrainExample> examples,
                         const Vocabulary& vocab, const MaskingPolicy& policy, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& ex : examples) {
    MaskedSequence m = apply_masking(ex.sequence, vocab, policy, rng);
    if (m.targets.empty()) continue;
    total += mvlm_loss(p, cfg, m.sequence, m.targets) * static_cast<double>(m.targets.size());
    count += m.targets.size();
  }
  require(count > 0, "heldout_mvlm_loss: no maskable tokens selected");
  return total / static_cast<double>(count);
}

}  // namespace geotext
