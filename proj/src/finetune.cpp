#include "geotext/finetune.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cstdio>
#include <ostream>
#include <set>

#include "geotext/dataset.hpp"
#include "geotext/error.hpp"
#include "geotext/parallel.hpp"
#include "geotext/optim.hpp"
#include "geotext/rng.hpp"

namespace geotext {

// ------------------------------------------------------------------ labeling

LabeledDoc label_document(const RawDocument& doc, const Vocabulary& vocab, std::size_t max_len,
                          std::span<const std::string> tagset, std::span<const std::string> class_names,
                          const FeatureProvider* features) {
  LabeledDoc out;
  out.sequence = encode_document(vocab, normalized_words(doc), max_len, doc.doc_id);
  out.tagset.assign(tagset.begin(), tagset.end());
  out.class_names.assign(class_names.begin(), class_names.end());
  for (const auto& w : doc.words) out.words.push_back(w.text);
  out.gold_slots = doc.slots;

  const std::size_t n_words = doc.words.size();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> first(n_words, kNone), last(n_words, kNone), pieces(n_words, 0);
  const std::size_t real = out.sequence.real_length();
  for (std::size_t i = 0; i < real; ++i) {
    const auto w = out.sequence.word_ids[i];
    if (w < 0) continue;
    const auto wi = static_cast<std::size_t>(w);
    if (first[wi] == kNone) first[wi] = i;
    last[wi] = i;
    ++pieces[wi];
  }
  auto complete = [&](std::size_t w) { return pieces[w] == tokenize_word(vocab, doc.words[w].text).size(); };

  if (!tagset.empty()) {
    std::vector<Entity> word_spans = doc.entities;
    for (const auto& [key, value] : doc.slots) {
      if (auto span = find_word_span(doc, value)) word_spans.push_back(Entity{span->first, span->second, key});
    }
    for (const auto& e : word_spans) {
      if (e.end >= n_words || first[e.start] == kNone || !complete(e.end)) continue;
      out.gold_entities.push_back(Entity{first[e.start], last[e.end], e.label});
    }
    std::sort(out.gold_entities.begin(), out.gold_entities.end());
    try {
      out.gold_tags = encode_bieso(out.gold_entities, max_len, tagset);
    } catch (const ConfigError& e) {
      throw DataError("document " + doc.doc_id + ": " + e.what());
    } catch (const ContractError& e) {
      throw DataError("document " + doc.doc_id + ": " + e.what());
    }
  }
  if (!class_names.empty()) {
    if (!doc.class_label) throw DataError("document " + doc.doc_id + " has no class label");
    auto it = std::find(class_names.begin(), class_names.end(), *doc.class_label);
    if (it == class_names.end()) throw DataError("document " + doc.doc_id + ": unknown class " + *doc.class_label);
    out.gold_class = static_cast<std::size_t>(it - class_names.begin());
  }
  if (features) out.features = gather_features(*features, out.sequence);
  return out;
}

std::vector<LabeledDoc> label_documents(std::span<const RawDocument> docs, const Vocabulary& vocab,
                                        std::size_t max_len, std::span<const std::string> tagset,
                                        std::span<const std::string> class_names, const FeatureProvider* features) {
  std::vector<LabeledDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(label_document(d, vocab, max_len, tagset, class_names, features));
  return out;
}

// ------------------------------------------------------------------ adaptation

Checkpoint adapt_checkpoint(const Checkpoint& source, const ModelConfig& target, std::uint64_t seed) {
  target.validate();
  const ModelConfig& sc = source.config;
  std::vector<std::string> diffs;
  auto cmp = [&](const char* field, std::size_t a, std::size_t b) {
    if (a != b) diffs.push_back(std::string(field) + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  };
  cmp("vocab_size", sc.vocab_size, target.vocab_size);
  cmp("hidden", sc.hidden, target.hidden);
  cmp("layers", sc.layers, target.layers);
  cmp("heads", sc.heads, target.heads);
  cmp("ffn_dim", sc.ffn_dim, target.ffn_dim);
  cmp("max_len", sc.max_len, target.max_len);
  if (!diffs.empty()) {
    std::string msg = "checkpoint backbone is incompatible; differing fields:";
    for (const auto& d : diffs) msg += " " + d;
    throw ConfigError(msg);
  }
  source.params.validate(sc);

  Checkpoint out;
  out.config = target;
  out.params = init_params(target, derive_seed(seed, stream::kInitFresh));
  auto dst = out.params.named();
  const auto src = source.params.named();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const std::string& name = dst[i].first;
    if (!sc.use_layout && (name == "embeddings.x" || name == "embeddings.y")) continue;
    if (sc.tagset != target.tagset && name.rfind("head.seqlabel.", 0) == 0) continue;
    if (sc.num_doc_classes != target.num_doc_classes && name.rfind("head.docclass.", 0) == 0) continue;
    if (src[i].second->shape() != dst[i].second->shape()) continue;
    std::copy(src[i].second->data().begin(), src[i].second->data().end(), dst[i].second->data().begin());
  }
  apply_modality(target, out.params);
  return out;
}

// ------------------------------------------------------------------ forward

namespace {

const ImageFeatures* features_for(const ModelConfig& cfg, const LabeledDoc& d) {
  if (!cfg.use_image) return nullptr;
  if (!d.features) throw DataError("document " + d.sequence.doc_id + " has no image features but the model uses them");
  return &*d.features;
}

// Fused states of the real prefix and the [CLS] image embedding.
std::pair<ag::Var, ag::Var> doc_states(BoundParams& b, const ModelConfig& cfg, const LabeledDoc& d) {
  const std::size_t n = d.sequence.real_length();
  require(n >= 1, "document has no real tokens");
  ag::Var h = fwd::encode(b, cfg, fwd::embed(b, d.sequence, n), {});
  return fwd::fuse_image(b, cfg, h, features_for(cfg, d));
}

void check_seqlabel_data(const ModelConfig& cfg, std::span<const LabeledDoc> docs, const char* what) {
  for (const auto& d : docs) {
    if (d.tagset != cfg.tagset) {
      std::string data_tags, model_tags;
      for (const auto& t : d.tagset) data_tags += " " + t;
      for (const auto& t : cfg.tagset) model_tags += " " + t;
      throw ConfigError(std::string(what) + " tagset {" + data_tags + " } does not match the checkpoint's {" +
                        model_tags + " }");
    }
    if (d.sequence.max_len() != cfg.max_len)
      throw DataError("document " + d.sequence.doc_id + " has length " + std::to_string(d.sequence.max_len()) +
                      ", model max_len is " + std::to_string(cfg.max_len));
    if (d.gold_tags.size() != cfg.max_len) throw DataError("document " + d.sequence.doc_id + " has no tag labels");
  }
}

void check_docclass_data(const ModelConfig& cfg, std::span<const LabeledDoc> docs, const char* what) {
  for (const auto& d : docs) {
    if (d.class_names.size() != cfg.num_doc_classes)
      throw ConfigError(std::string(what) + " has " + std::to_string(d.class_names.size()) +
                        " classes, the checkpoint has " + std::to_string(cfg.num_doc_classes));
    if (!d.gold_class) throw DataError("document " + d.sequence.doc_id + " has no class label");
    if (d.sequence.max_len() != cfg.max_len)
      throw DataError("document " + d.sequence.doc_id + " has length " + std::to_string(d.sequence.max_len()) +
                      ", model max_len is " + std::to_string(cfg.max_len));
  }
}

// Sum of per-document losses, each weighted by weight(doc).
template <class TermFn>
double batch_loss(const ModelParams& p, std::span<const LabeledDoc* const> batch, std::vector<Tensor>* grads,
                  TermFn term) {
  ag::Graph g;
  BoundParams b(g, p);
  ag::Var loss;
  for (const LabeledDoc* d : batch) {
    ag::Var t = term(b, *d);
    loss = loss.valid() ? ag::add(loss, t) : t;
  }
  const double value = loss.value().item();
  if (grads) {
    g.backward(loss);
    *grads = b.grads();
  }
  return value;
}

double docclass_batch_loss(const ModelParams& p, const ModelConfig& cfg, std::span<const LabeledDoc* const> batch,
                           std::vector<Tensor>* grads) {
  const double w = 1.0 / static_cast<double>(batch.size());
  return batch_loss(p, batch, grads, [&](BoundParams& b, const LabeledDoc& d) {
    auto [h, cls_img] = doc_states(b, cfg, d);
    ag::Var logits = fwd::docclass_logits(b, fwd::cls_vector(h), cls_img);
    return ag::scale(ag::cross_entropy(logits, {*d.gold_class}), w);
  });
}

template <class LossFn, class ScoreFn>
FinetuneResult train_loop(const Checkpoint& ckpt, std::span<const LabeledDoc> train, const FinetuneOptions& options,
                          const EpochCallback& on_epoch, LossFn loss_fn, ScoreFn score_fn) {
  require(options.batch_size >= 1, "finetune: batch_size must be >= 1");
  const ModelConfig& cfg = ckpt.config;
  FinetuneResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.params = ckpt.params;  // training works on a copy
  ModelParams& params = result.checkpoint.params;
  ModelParams best = params;

  const std::size_t per_epoch = (train.size() + options.batch_size - 1) / options.batch_size;
  OptimizerConfig opt;
  opt.initial_lr = options.lr;
  opt.total_steps = std::max<std::uint64_t>(1, options.epochs * per_epoch);
  opt.validate();
  auto tensors = params.tensors();
  AdamState state = AdamState::zeros_like(tensors);

  const std::uint64_t shuffle_seed = derive_seed(options.seed, stream::kShuffle);
  std::uint64_t step = 0;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(shuffle_seed, epoch));
    rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    for (std::size_t j = 0; j < per_epoch; ++j) {
      std::vector<const LabeledDoc*> batch;
      for (std::size_t k = j * options.batch_size; k < std::min(train.size(), (j + 1) * options.batch_size); ++k)
        batch.push_back(&train[order[k]]);
      std::vector<Tensor> grads;
      loss_sum += loss_fn(params, cfg, batch, &grads);
      adam_step(tensors, grads, state, opt, ++step);
    }
    const EpochRecord rec{epoch, loss_sum / static_cast<double>(per_epoch), score_fn(params)};
    result.history.push_back(rec);
    if (!have_best || rec.dev_score > result.best_dev_score) {
      have_best = true;
      result.best_dev_score = rec.dev_score;
      result.best_epoch = epoch;
      best = params;
    }
    if (on_epoch) on_epoch(rec);
    if (options.stop_at && rec.dev_score >= *options.stop_at) break;
  }
  if (!have_best) result.best_dev_score = score_fn(params);
  result.checkpoint.params = std::move(best);
  return result;
}

}  // namespace

double seqlabel_batch_loss(const ModelParams& p, const ModelConfig& cfg, std::span<const LabeledDoc* const> batch,
                           std::vector<Tensor>* grads) {
  std::size_t total = 0;
  for (const LabeledDoc* d : batch) total += d->sequence.real_length();
  require(total > 0, "seqlabel_batch_loss: empty batch");
  return batch_loss(p, batch, grads, [&](BoundParams& b, const LabeledDoc& d) {
    auto [h, cls_img] = doc_states(b, cfg, d);
    (void)cls_img;
    const std::size_t n = d.sequence.real_length();
    std::vector<std::size_t> targets(d.gold_tags.begin(), d.gold_tags.begin() + static_cast<std::ptrdiff_t>(n));
    ag::Var ce = ag::cross_entropy(fwd::seqlabel_logits(b, h), std::move(targets));
    // Mean over every real token of the batch.
    return ag::scale(ce, static_cast<double>(n) / static_cast<double>(total));
  });
}

std::vector<std::size_t> predict_tags(const ModelParams& p, const ModelConfig& cfg, const LabeledDoc& doc) {
  ag::Graph g;
  BoundParams b(g, p);
  auto [h, cls_img] = doc_states(b, cfg, doc);
  (void)cls_img;
  const Tensor logits = fwd::seqlabel_logits(b, h).value();
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(logits.row(i));
  return out;
}

std::size_t predict_class(const ModelParams& p, const ModelConfig& cfg, const LabeledDoc& doc) {
  ag::Graph g;
  BoundParams b(g, p);
  auto [h, cls_img] = doc_states(b, cfg, doc);
  const Tensor logits = fwd::docclass_logits(b, fwd::cls_vector(h), cls_img).value();
  return argmax(logits.row(0));
}

SlotMap assemble_slots(const LabeledDoc& doc, std::span<const Entity> token_entities) {
  SlotMap out;
  for (const auto& e : token_entities) {
    if (out.contains(e.label)) continue;
    std::string value;
    std::int32_t prev = -1;
    for (std::size_t i = e.start; i <= e.end && i < doc.sequence.word_ids.size(); ++i) {
      const auto w = doc.sequence.word_ids[i];
      if (w < 0 || w == prev) continue;
      prev = w;
      if (!value.empty()) value += ' ';
      value += doc.words.at(static_cast<std::size_t>(w));
    }
    out.emplace(e.label, std::move(value));
  }
  return out;
}

// ------------------------------------------------------------------ training

FinetuneResult finetune_seqlabel(const Checkpoint& ckpt, std::span<const LabeledDoc> train,
                                 std::span<const LabeledDoc> dev, const FinetuneOptions& options,
                                 const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("finetune: empty training set");
  if (dev.empty()) throw DataError("finetune: empty dev set");
  ckpt.config.validate();
  check_seqlabel_data(ckpt.config, train, "training data");
  check_seqlabel_data(ckpt.config, dev, "dev data");
  return train_loop(ckpt, train, options, on_epoch, seqlabel_batch_loss, [&](const ModelParams& p) {
    return evaluate_seqlabel(p, ckpt.config, dev).overall.f1;
  });
}

FinetuneResult finetune_docclass(const Checkpoint& ckpt, std::span<const LabeledDoc> train,
                                 std::span<const LabeledDoc> dev, const FinetuneOptions& options,
                                 const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("finetune: empty training set");
  if (dev.empty()) throw DataError("finetune: empty dev set");
  ckpt.config.validate();
  check_docclass_data(ckpt.config, train, "training data");
  check_docclass_data(ckpt.config, dev, "dev data");
  return train_loop(ckpt, train, options, on_epoch, docclass_batch_loss,
                    [&](const ModelParams& p) { return evaluate_docclass(p, ckpt.config, dev); });
}

// ------------------------------------------------------------------ evaluation

Task parse_task(std::string_view name) {
  if (name == "seqlabel") return Task::SeqLabel;
  if (name == "slots") return Task::Slots;
  if (name == "docclass") return Task::DocClass;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected seqlabel, slots or docclass)");
}

std::string_view task_name(Task t) {
  switch (t) {
    case Task::SeqLabel: return "seqlabel";
    case Task::Slots: return "slots";
    case Task::DocClass: return "docclass";
  }
  return "?";
}

namespace {

std::vector<std::vector<std::size_t>> predict_all(const ModelParams& p, const ModelConfig& cfg,
                                                  std::span<const LabeledDoc> docs) {
  std::vector<std::vector<std::size_t>> out(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) { out[i] = predict_tags(p, cfg, docs[i]); });
  return out;
}

}  // namespace

SeqlabelMetrics evaluate_seqlabel(const ModelParams& p, const ModelConfig& cfg, std::span<const LabeledDoc> docs) {
  if (docs.empty()) throw DataError("evaluate: empty dataset");
  check_seqlabel_data(cfg, docs, "evaluation data");
  const auto preds = predict_all(p, cfg, docs);

  std::map<std::string, std::array<std::size_t, 3>> counts;  // tp, pred, gold
  for (std::size_t t = 1; t < cfg.tagset.size(); ++t) counts[cfg.tagset[t].substr(2)];
  std::size_t tp = 0, n_pred = 0, n_gold = 0, tok_ok = 0, tok_total = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    const auto pred_entities = decode_bieso_ids(preds[i], cfg.tagset);
    const std::set<Entity> gold(d.gold_entities.begin(), d.gold_entities.end());
    const std::set<Entity> pred(pred_entities.begin(), pred_entities.end());
    for (const auto& e : pred) {
      const bool hit = gold.contains(e);
      tp += hit;
      counts[e.label][0] += hit;
      ++counts[e.label][1];
    }
    for (const auto& e : gold) ++counts[e.label][2];
    n_pred += pred.size();
    n_gold += gold.size();
    for (std::size_t k = 0; k < preds[i].size(); ++k) {
      if (d.sequence.word_ids[k] < 0) continue;
      ++tok_total;
      tok_ok += preds[i][k] == d.gold_tags[k];
    }
  }
  SeqlabelMetrics m;
  m.overall = prf_from_counts(tp, n_pred, n_gold);
  for (const auto& [label, c] : counts) m.per_label[label] = prf_from_counts(c[0], c[1], c[2]);
  m.token_accuracy = tok_total ? static_cast<double>(tok_ok) / static_cast<double>(tok_total) : 0.0;
  return m;
}

double evaluate_docclass(const ModelParams& p, const ModelConfig& cfg, std::span<const LabeledDoc> docs) {
  if (docs.empty()) throw DataError("evaluate: empty dataset");
  check_docclass_data(cfg, docs, "evaluation data");
  std::vector<std::size_t> preds(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) { preds[i] = predict_class(p, cfg, docs[i]); });
  std::size_t ok = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) ok += preds[i] == *docs[i].gold_class;
  return static_cast<double>(ok) / static_cast<double>(docs.size());
}

MetricsRecord evaluate(const Checkpoint& ckpt, std::span<const LabeledDoc> data, Task task) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  const ModelConfig& cfg = ckpt.config;
  cfg.validate();
  MetricsRecord r;
  r.task = task;
  r.n_docs = data.size();
  auto put_prf = [&](const std::string& prefix, const Prf& x) {
    r.values[prefix + "precision"] = x.precision;
    r.values[prefix + "recall"] = x.recall;
    r.values[prefix + "f1"] = x.f1;
    r.values[prefix + "tp"] = static_cast<double>(x.tp);
    r.values[prefix + "n_pred"] = static_cast<double>(x.n_pred);
    r.values[prefix + "n_gold"] = static_cast<double>(x.n_gold);
  };
  switch (task) {
    case Task::SeqLabel: {
      if (cfg.tagset.size() < 2) throw ConfigError("evaluate: checkpoint has no entity tagset");
      const auto m = evaluate_seqlabel(ckpt.params, cfg, data);
      put_prf("", m.overall);
      r.values["token_accuracy"] = m.token_accuracy;
      for (const auto& [label, x] : m.per_label) put_prf("label." + label + ".", x);
      break;
    }
    case Task::Slots: {
      if (cfg.tagset.size() < 2) throw ConfigError("evaluate: checkpoint has no slot tagset");
      check_seqlabel_data(cfg, data, "evaluation data");
      const auto preds = predict_all(ckpt.params, cfg, data);
      SlotCounts all;
      std::map<std::string, SlotCounts> per_key;
      for (std::size_t t = 1; t < cfg.tagset.size(); ++t) per_key[cfg.tagset[t].substr(2)];
      for (std::size_t i = 0; i < data.size(); ++i) {
        const SlotMap pred = assemble_slots(data[i], decode_bieso_ids(preds[i], cfg.tagset));
        all.add(pred, data[i].gold_slots);
        for (auto& [key, c] : per_key) {
          SlotMap p1, g1;
          if (auto it = pred.find(key); it != pred.end()) p1.insert(*it);
          if (auto it = data[i].gold_slots.find(key); it != data[i].gold_slots.end()) g1.insert(*it);
          c.add(p1, g1);
        }
      }
      put_prf("", all.score());
      for (const auto& [key, c] : per_key) put_prf("slot." + key + ".", c.score());
      break;
    }
    case Task::DocClass: {
      check_docclass_data(cfg, data, "evaluation data");
      std::vector<std::size_t> preds(data.size());
      parallel_for(data.size(), [&](std::size_t i) { preds[i] = predict_class(ckpt.params, cfg, data[i]); });
      const auto& names = data.front().class_names;
      std::vector<std::size_t> hit(names.size(), 0), count(names.size(), 0);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t gold = *data[i].gold_class;
        ++count[gold];
        hit[gold] += preds[i] == gold;
        ok += preds[i] == gold;
      }
      r.values["accuracy"] = static_cast<double>(ok) / static_cast<double>(data.size());
      for (std::size_t c = 0; c < names.size(); ++c) {
        r.values["class." + names[c] + ".count"] = static_cast<double>(count[c]);
        r.values["class." + names[c] + ".recall"] =
            count[c] ? static_cast<double>(hit[c]) / static_cast<double>(count[c]) : 0.0;
      }
      break;
    }
  }
  return r;
}

void write_metrics(std::ostream& os, const MetricsRecord& record, std::uint64_t config_hash) {
  char buf[64];
  os << "format=geotext-metrics\n";
  os << "version=" << kMetricsFormatVersion << "\n";
  os << "task=" << task_name(record.task) << "\n";
  std::snprintf(buf, sizeof buf, "%016" PRIx64, config_hash);
  os << "config_hash=" << buf << "\n";
  os << "n_docs=" << record.n_docs << "\n";
  for (const auto& [k, v] : record.values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << k << "=" << buf << "\n";
  }
}

}  // namespace geotext
