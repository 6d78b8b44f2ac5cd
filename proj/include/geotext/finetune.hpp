#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geotext/checkpoint.hpp"
#include "geotext/document.hpp"
#include "geotext/features.hpp"
#include "geotext/metrics.hpp"
#include "geotext/model.hpp"
#include "geotext/vocab.hpp"

namespace geotext {

/// An encoded document with its supervision.
struct LabeledDoc {
  TokenSequence sequence;
  std::vector<std::string> tagset;        // label space of gold_tags
  std::vector<std::string> class_names;   // label space of gold_class
  std::vector<std::size_t> gold_tags;     // per position; "O" outside real word tokens
  std::vector<Entity> gold_entities;      // token-index spans, decode of gold_tags
  std::optional<std::size_t> gold_class;
  SlotMap gold_slots;
  std::vector<std::string> words;         // word texts, for slot assembly
  std::optional<ImageFeatures> features;  // required when the model uses images
};

/// Entity token span: first piece of the start word to the last piece of
/// the end word. Entities cut by truncation are dropped. For slot datasets
/// each slot becomes an entity labeled by its key at the first matching
/// word span. `tagset` empty means no sequence labels; `class_names` empty
/// means no class label.
LabeledDoc label_document(const RawDocument& doc, const Vocabulary& vocab, std::size_t max_len,
                          std::span<const std::string> tagset, std::span<const std::string> class_names,
                          const FeatureProvider* features = nullptr);

std::vector<LabeledDoc> label_documents(std::span<const RawDocument> docs, const Vocabulary& vocab,
                                        std::size_t max_len, std::span<const std::string> tagset,
                                        std::span<const std::string> class_names,
                                        const FeatureProvider* features = nullptr);

/// Rebuilds a checkpoint for `target`: tensors with the same name and shape
/// are copied, except the 2-D tables when the source had no layout and each
/// head whose label space changed; everything else is freshly initialized
/// from derive_seed(seed, kInitFresh). Backbone dimensions must agree.
Checkpoint adapt_checkpoint(const Checkpoint& source, const ModelConfig& target, std::uint64_t seed);

struct FinetuneOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr = 5e-5;
  std::uint64_t seed = 0;
  /// Stop after the first epoch whose dev score reaches this value.
  std::optional<double> stop_at;
};

struct EpochRecord {
  std::size_t epoch;
  double train_loss;  // mean over the epoch's batches
  double dev_score;   // F1 or accuracy
};

struct FinetuneResult {
  Checkpoint checkpoint;  // best dev epoch; ties go to the earlier epoch
  std::size_t best_epoch = 0;
  double best_dev_score = 0.0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Token cross-entropy over the real prefix of each sequence (padding never
/// enters the graph), all parameters updated. The input is never modified.
FinetuneResult finetune_seqlabel(const Checkpoint& ckpt, std::span<const LabeledDoc> train,
                                 std::span<const LabeledDoc> dev, const FinetuneOptions& options,
                                 const EpochCallback& on_epoch = {});

/// Cross-entropy on the document-class head.
FinetuneResult finetune_docclass(const Checkpoint& ckpt, std::span<const LabeledDoc> train,
                                 std::span<const LabeledDoc> dev, const FinetuneOptions& options,
                                 const EpochCallback& on_epoch = {});

/// Loss of one batch as used by finetune_seqlabel, with gradients; for tests.
double seqlabel_batch_loss(const ModelParams& p, const ModelConfig& cfg, std::span<const LabeledDoc* const> batch,
                           std::vector<Tensor>* grads);

/// Per-position tag predictions over the real prefix.
std::vector<std::size_t> predict_tags(const ModelParams& p, const ModelConfig& cfg, const LabeledDoc& doc);
std::size_t predict_class(const ModelParams& p, const ModelConfig& cfg, const LabeledDoc& doc);

/// Slot values from predicted entities: for each key, the first entity's
/// words joined by single spaces.
SlotMap assemble_slots(const LabeledDoc& doc, std::span<const Entity> token_entities);

enum class Task { SeqLabel, Slots, DocClass };
Task parse_task(std::string_view name);
std::string_view task_name(Task t);

struct SeqlabelMetrics {
  Prf overall;
  std::map<std::string, Prf> per_label;
  double token_accuracy = 0.0;  // over real word tokens
};

struct MetricsRecord {
  Task task = Task::SeqLabel;
  std::size_t n_docs = 0;
  std::map<std::string, double> values;  // stable keys, see docs/formats.md
  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

SeqlabelMetrics evaluate_seqlabel(const ModelParams& p, const ModelConfig& cfg, std::span<const LabeledDoc> docs);
double evaluate_docclass(const ModelParams& p, const ModelConfig& cfg, std::span<const LabeledDoc> docs);

/// Pure inference. Empty data is a DataError; a task the checkpoint cannot
/// serve is a ConfigError.
MetricsRecord evaluate(const Checkpoint& ckpt, std::span<const LabeledDoc> data, Task task);

inline constexpr int kMetricsFormatVersion = 1;

/// key=value lines: format, version, task, config_hash, n_docs, then every
/// value in key order (%.17g).
void write_metrics(std::ostream& os, const MetricsRecord& record, std::uint64_t config_hash);

}  // namespace geotext
