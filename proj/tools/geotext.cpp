// Command-line driver. Exit codes: 0 success, 1 invalid configuration or
// usage, 2 bad input data, 3 internal error.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "geotext/checkpoint.hpp"
#include "geotext/dataset.hpp"
#include "geotext/error.hpp"
#include "geotext/features.hpp"
#include "geotext/finetune.hpp"
#include "geotext/hocr.hpp"
#include "geotext/pretrain.hpp"
#include "geotext/synth.hpp"
#include "geotext/vocab.hpp"
#include "run_config.hpp"

#ifndef GEOTEXT_VERSION
#define GEOTEXT_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace geotext;
using geotext::cli::RunConfig;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kDataError = 2, kInternal = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

/// Identifies the experiment, not where it was written: output_dir is left out.
std::uint64_t config_hash(const RunConfig& c) {
  RunConfig h = c;
  h.output_dir.clear();
  return h.hash();
}

RunConfig load_config(const Common& o, const std::string& command) {
  std::vector<std::string> overrides = o.overrides;
  if (!o.output_dir.empty()) overrides.push_back("run.output_dir=" + o.output_dir);
  if (o.seed) overrides.push_back("run.seed=" + std::to_string(*o.seed));
  RunConfig c = o.config.empty() ? cli::parse_run_config("", overrides, fs::current_path())
                                 : cli::load_run_config(o.config, overrides);
  const auto problems = cli::validate_for(c, command);
  if (!problems.empty()) {
    std::string msg = "invalid configuration for " + command + ":";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  return c;
}

/// Creates the output directory and refuses to replace existing outputs unless forced.
void prepare_output(const RunConfig& c, const std::vector<std::string>& files, bool force) {
  const fs::path dir = c.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".geotext-write-probe";
  {
    std::ofstream p(probe);
    if (!p) throw ConfigError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
  if (force) return;
  for (const auto& f : files) {
    if (fs::exists(dir / f)) throw ConfigError("refusing to overwrite " + (dir / f).string() + " (pass --force)");
  }
}

void write_manifest(const RunConfig& c, const std::string& command) {
  std::string m;
  m += "[manifest]\n";
  m += "format = geotext-manifest\n";
  m += "version = 1\n";
  m += "command = " + command + "\n";
  m += "tool_version = " GEOTEXT_VERSION "\n";
  m += "config_hash = " + hex(config_hash(c)) + "\n";
  m += "checkpoint_format = " + std::to_string(kCheckpointVersion) + "\n";
  m += "feature_format = " + std::to_string(kFeatureFileVersion) + "\n";
  m += "metrics_format = " + std::to_string(kMetricsFormatVersion) + "\n";
  m += "dataset_format = jsonl-1\n\n";
  m += c.to_text();
  write_file_atomic(fs::path(c.output_dir) / "manifest.ini", m);
}

synth::FormSpec form_spec(const RunConfig& c) {
  synth::FormSpec s;
  s.n_pairs = c.synth.n_pairs;
  s.below_rate = c.synth.below_rate;
  s.label_noise = c.synth.label_noise;
  s.style_rate = c.synth.style_rate;
  return s;
}

synth::PretrainMix pretrain_mix(const RunConfig& c) {
  synth::PretrainMix mix;
  mix.form_fraction = c.synth.form_fraction;
  mix.form = form_spec(c);
  mix.form.phrases = synth::default_phrasebook();
  return mix;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Common& o) {
  const RunConfig c = load_config(o, "synth");
  std::vector<std::string> files{"manifest.ini"};
  for (const auto& [name, n] : c.synth.splits) files.push_back(name + ".jsonl");
  prepare_output(c, files, o.force);

  const std::uint64_t base = derive_seed(c.seed, stream::kSynth);
  for (const auto& [name, n] : c.synth.splits) {
    const std::uint64_t seed = derive_seed(base, hash_string(name));
    std::vector<RawDocument> docs;
    DatasetFormat format = DatasetFormat::FunsdLike;
    if (c.synth.kind == "forms") {
      docs = synth::gen_forms(n, seed, form_spec(c), name);
    } else if (c.synth.kind == "receipts") {
      docs = synth::gen_receipts(n, seed, name);
      format = DatasetFormat::SlotsLike;
    } else if (c.synth.kind == "classdocs") {
      docs = synth::gen_classdocs(n, seed, {}, name);
      format = DatasetFormat::ClassesLike;
    } else {
      docs = synth::gen_pretrain_documents(n, seed, pretrain_mix(c));
      for (auto& d : docs) d.doc_id = name + d.doc_id.substr(3);  // "pre-i" -> "<split>-i"
    }
    write_dataset(fs::path(c.output_dir) / (name + ".jsonl"), docs, format);
    std::cout << name << ".jsonl\t" << dataset_format_name(format) << "\t" << docs.size() << " documents\n";
  }
  write_manifest(c, "synth");
  return kOk;
}

// ---------------------------------------------------------------- ingest

int cmd_ingest(const std::string& path, const std::string& format, const std::string& out, bool force) {
  std::vector<RawDocument> docs;
  DatasetFormat out_format = DatasetFormat::FunsdLike;
  if (format == "hocr") {
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
      for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_regular_file() && (e.path().extension() == ".hocr" || e.path().extension() == ".html")) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw DataError("directory " + path + " contains no .hocr files");
    } else if (fs::is_regular_file(path)) {
      files.push_back(path);
    } else {
      throw DataError("input path " + path + " does not exist");
    }
    for (const auto& f : files) {
      try {
        docs.push_back(parse_hocr(read_file(f)));
      } catch (const ParseError& e) {
        throw ParseError(f.string() + ": " + e.what());
      }
    }
  } else {
    out_format = parse_dataset_format(format);
    docs = load_labeled_dataset(path, out_format);
  }

  std::size_t words = 0, entities = 0, slots = 0, clipped = 0, styled = 0;
  std::map<std::string, std::size_t> labels, classes;
  for (const auto& d : docs) {
    words += d.words.size();
    entities += d.entities.size();
    slots += d.slots.size();
    clipped += d.clipped_boxes;
    for (const auto& w : d.words) styled += w.style != kStyleNone;
    for (const auto& e : d.entities) ++labels[e.label];
    if (d.class_label) ++classes[*d.class_label];
  }
  std::cout << "documents\t" << docs.size() << "\nwords\t" << words << "\nentities\t" << entities << "\nslots\t" << slots
            << "\nstyled_words\t" << styled << "\nclipped_boxes\t" << clipped << "\n";
  for (const auto& [l, n] : labels) std::cout << "entity." << l << "\t" << n << "\n";
  for (const auto& [l, n] : classes) std::cout << "class." << l << "\t" << n << "\n";

  if (!out.empty()) {
    if (fs::exists(out) && !force) throw ConfigError("refusing to overwrite " + out + " (pass --force)");
    if (format == "hocr") {
      // Words only: the annotations have to come from elsewhere.
      write_dataset(out, docs, DatasetFormat::FunsdLike);
    } else {
      write_dataset(out, docs, out_format);
    }
  }
  return kOk;
}

// ---------------------------------------------------------------- pretrain

double window_mean(const std::vector<LossRecord>& curve, bool tail) {
  const std::size_t n = std::min<std::size_t>(50, curve.size());
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += curve[tail ? curve.size() - n + i : i].mvlm;
  return s / static_cast<double>(n);
}

void write_value_metrics(const fs::path& path, const std::string& task, std::uint64_t hash, std::size_t n_docs,
                         const std::map<std::string, double>& values) {
  std::ostringstream os;
  os << "format=geotext-metrics\nversion=" << kMetricsFormatVersion << "\ntask=" << task << "\nconfig_hash=" << hex(hash)
     << "\nn_docs=" << n_docs << "\n";
  char buf[40];
  for (const auto& [k, v] : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << k << "=" << buf << "\n";
  }
  write_file_atomic(path, os.str());
}

int cmd_pretrain(const Common& o) {
  const RunConfig c = load_config(o, "pretrain");
  prepare_output(c, {"checkpoint.bin", "vocab.txt", "loss_curve.tsv", "metrics.txt", "manifest.ini"}, o.force);

  const bool synthetic = c.pretrain.corpus.empty();
  const std::vector<RawDocument> docs =
      synthetic ? synth::gen_pretrain_documents(c.pretrain.corpus_docs, c.seed, pretrain_mix(c))
                : load_labeled_dataset(c.pretrain.corpus, parse_dataset_format(c.pretrain.corpus_format));
  const Vocabulary vocab = c.data.vocab.empty() ? build_vocab(synth::corpus_words(docs), c.model.vocab_size)
                                                : Vocabulary::load(c.data.vocab);

  ModelConfig cfg = c.model;
  cfg.vocab_size = vocab.size();
  cfg.tagset = {"O"};
  cfg.num_mdc_tags = synth::kNumPretrainTags;
  if (!docs.empty() && docs.front().tags) cfg.num_mdc_tags = docs.front().tags->size();
  const auto corpus = synth::to_pretrain_examples(docs, vocab, cfg.max_len);

  PretrainOptions po;
  po.steps = c.pretrain.steps;
  po.stop_after = c.pretrain.stop_after;
  po.batch_size = c.pretrain.batch_size;
  po.objectives = {c.pretrain.mvlm, c.pretrain.mdc};
  po.masking = c.masking;
  po.seed = c.seed;
  if (!c.pretrain.resume.empty()) po.resume = load_checkpoint(c.pretrain.resume);
  po.on_step = [&](const LossRecord& r) {
    if (r.step % 50 == 0 || r.step == po.steps) {
      std::fprintf(stderr, "step %" PRIu64 "/%" PRIu64 "  lr %.3g  mvlm %.4f  mdc %.4f\n", r.step, po.steps, r.lr,
                   r.mvlm, r.mdc);
    }
  };
  OptimizerConfig opt = c.optimizer;
  const PretrainResult result = run_pretrain(corpus, vocab, cfg, opt, po);

  const fs::path dir = c.output_dir;
  save_checkpoint(result.checkpoint, dir / "checkpoint.bin");
  vocab.save(dir / "vocab.txt");
  std::ostringstream curve;
  write_loss_curve(curve, result.curve);
  write_file_atomic(dir / "loss_curve.tsv", curve.str());

  std::map<std::string, double> values;
  values["steps_run"] = static_cast<double>(result.curve.size());
  values["vocab_size"] = static_cast<double>(vocab.size());
  if (c.pretrain.mvlm && !result.curve.empty()) {
    values["mvlm_initial_mean"] = window_mean(result.curve, false);
    values["mvlm_final_mean"] = window_mean(result.curve, true);
  }
  if (c.pretrain.mvlm && synthetic && c.pretrain.heldout_docs > 0) {
    const auto held = synth::gen_pretrain_documents(c.pretrain.heldout_docs, derive_seed(c.seed, stream::kHeldout),
                                                    pretrain_mix(c));
    const auto examples = synth::to_pretrain_examples(held, vocab, cfg.max_len);
    values["heldout_mvlm_loss"] = heldout_mvlm_loss(result.checkpoint.params, cfg, examples, vocab, c.masking,
                                                    derive_seed(c.seed, stream::kHeldout));
    values["ln_vocab_size"] = std::log(static_cast<double>(vocab.size()));
  }
  write_value_metrics(dir / "metrics.txt", "pretrain", config_hash(c), docs.size(), values);
  write_manifest(c, "pretrain");
  for (const auto& [k, v] : values) std::cout << k << "\t" << v << "\n";
  return kOk;
}

// ---------------------------------------------------------------- finetune / eval

DatasetSchema schema_for(Task task, const std::vector<std::string>& labels) {
  DatasetSchema s;
  switch (task) {
    case Task::SeqLabel: s.entity_labels = labels; break;
    case Task::Slots: s.slot_keys = labels; break;
    case Task::DocClass: s.class_names = labels; break;
  }
  return s;
}

/// Entity types of a BIESO tagset, in tagset order.
std::vector<std::string> tag_types(const std::vector<std::string>& tagset) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < tagset.size(); i += 4) out.push_back(tagset[i].substr(2));
  return out;
}

std::unique_ptr<FeatureProvider> make_features(const RunConfig& c, std::size_t dim,
                                               std::initializer_list<const std::vector<RawDocument>*> docs) {
  if (!c.data.features.empty()) {
    auto f = file_features(c.data.features);
    if (f->dim() != dim) {
      throw ConfigError("feature file dim " + std::to_string(f->dim()) + " differs from model.img_feat_dim " +
                        std::to_string(dim));
    }
    return f;
  }
  auto p = std::make_unique<PseudoFeatureProvider>(dim);
  for (const auto* set : docs)
    for (const auto& d : *set) p->add(d);
  return p;
}

std::vector<LabeledDoc> label(const std::vector<RawDocument>& docs, const Vocabulary& v, const ModelConfig& cfg,
                              Task task, const std::vector<std::string>& class_names, const FeatureProvider* f) {
  const std::vector<std::string> no_tags;
  if (task == Task::DocClass) return label_documents(docs, v, cfg.max_len, no_tags, class_names, f);
  return label_documents(docs, v, cfg.max_len, cfg.tagset, {}, f);
}

int cmd_finetune(const Common& o) {
  const RunConfig c = load_config(o, "finetune");
  prepare_output(c, {"checkpoint.bin", "vocab.txt", "history.tsv", "metrics.txt", "manifest.ini"}, o.force);

  const Task task = parse_task(c.finetune.task);
  const auto labels = c.label_names();
  const DatasetFormat format = parse_dataset_format(c.format_name());
  const auto schema = schema_for(task, labels);
  const auto train_docs = load_labeled_dataset(c.finetune.train, format, schema);
  const auto dev_docs = load_labeled_dataset(c.finetune.dev, format, schema);

  fs::path vocab_path = c.data.vocab;
  if (vocab_path.empty() && !c.finetune.init.empty()) {
    const fs::path beside = fs::path(c.finetune.init).parent_path() / "vocab.txt";
    if (fs::exists(beside)) vocab_path = beside;
  }
  const Vocabulary vocab = vocab_path.empty() ? build_vocab(synth::corpus_words(train_docs), c.model.vocab_size)
                                              : Vocabulary::load(vocab_path);

  ModelConfig cfg = c.model;
  cfg.vocab_size = vocab.size();
  cfg.num_mdc_tags = synth::kNumPretrainTags;
  if (task == Task::DocClass) {
    cfg.tagset = {"O"};
    cfg.num_doc_classes = labels.size();
  } else {
    cfg.tagset = make_bieso_tagset(labels);
  }

  Checkpoint start;
  if (!c.finetune.init.empty()) {
    const Checkpoint init = load_checkpoint(c.finetune.init);
    ModelConfig target = cfg;
    target.num_mdc_tags = init.config.num_mdc_tags;
    if (task != Task::DocClass) target.num_doc_classes = init.config.num_doc_classes;
    start = adapt_checkpoint(init, target, c.seed);
    cfg = target;
  } else {
    start = Checkpoint{cfg, init_params(cfg, c.seed), std::nullopt};
  }

  std::unique_ptr<FeatureProvider> features;
  if (cfg.use_image) features = make_features(c, cfg.img_feat_dim, {&train_docs, &dev_docs});
  const auto train = label(train_docs, vocab, cfg, task, labels, features.get());
  const auto dev = label(dev_docs, vocab, cfg, task, labels, features.get());

  FinetuneOptions fo;
  fo.epochs = c.finetune.epochs;
  fo.batch_size = c.finetune.batch_size;
  fo.lr = c.optimizer.initial_lr;
  fo.seed = c.seed;
  fo.stop_at = c.finetune.stop_at;
  auto report = [](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %zu  train_loss %.4f  dev %.4f\n", e.epoch, e.train_loss, e.dev_score);
  };
  const FinetuneResult r = task == Task::DocClass ? finetune_docclass(start, train, dev, fo, report)
                                                  : finetune_seqlabel(start, train, dev, fo, report);

  const fs::path dir = c.output_dir;
  save_checkpoint(r.checkpoint, dir / "checkpoint.bin");
  vocab.save(dir / "vocab.txt");
  std::ostringstream hist;
  hist << "epoch\ttrain_loss\tdev_score\n";
  char buf[80];
  for (const auto& e : r.history) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\n", e.epoch, e.train_loss, e.dev_score);
    hist << buf;
  }
  write_file_atomic(dir / "history.tsv", hist.str());
  const MetricsRecord m = evaluate(r.checkpoint, dev, task);
  std::ostringstream ms;
  write_metrics(ms, m, config_hash(c));
  write_file_atomic(dir / "metrics.txt", ms.str());
  write_manifest(c, "finetune");
  std::cout << "best_epoch\t" << r.best_epoch << "\nbest_dev_score\t" << r.best_dev_score << "\n";
  return kOk;
}

int cmd_eval(const Common& o) {
  const RunConfig c = load_config(o, "eval");
  prepare_output(c, {"metrics.txt", "manifest.ini"}, o.force);

  const Task task = parse_task(c.finetune.task);
  const Checkpoint ckpt = load_checkpoint(c.eval.checkpoint);
  const fs::path vocab_path =
      c.data.vocab.empty() ? fs::path(c.eval.checkpoint).parent_path() / "vocab.txt" : fs::path(c.data.vocab);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  if (vocab.size() != ckpt.config.vocab_size) {
    throw ConfigError("vocabulary " + vocab_path.string() + " has " + std::to_string(vocab.size()) +
                      " tokens but the checkpoint expects " + std::to_string(ckpt.config.vocab_size));
  }
  const auto labels = task == Task::DocClass ? c.label_names() : tag_types(ckpt.config.tagset);
  if (task == Task::DocClass && labels.size() != ckpt.config.num_doc_classes) {
    throw ConfigError("finetune.labels names " + std::to_string(labels.size()) + " classes, the checkpoint has " +
                      std::to_string(ckpt.config.num_doc_classes));
  }
  const auto docs =
      load_labeled_dataset(c.eval.data, parse_dataset_format(c.format_name()), schema_for(task, labels));
  std::unique_ptr<FeatureProvider> features;
  if (ckpt.config.use_image) features = make_features(c, ckpt.config.img_feat_dim, {&docs});
  const auto data = label(docs, vocab, ckpt.config, task, labels, features.get());

  const MetricsRecord m = evaluate(ckpt, data, task);
  std::ostringstream ms;
  write_metrics(ms, m, config_hash(c));
  write_file_atomic(fs::path(c.output_dir) / "metrics.txt", ms.str());
  write_manifest(c, "eval");
  std::cout << ms.str();
  return kOk;
}

int cmd_validate(const Common& o, const std::string& command) {
  (void)load_config(o, command);
  std::cout << "configuration is valid for " << command << "\n";
  return kOk;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config: return kInvalid;
    case ErrorKind::Parse:
    case ErrorKind::Data:
    case ErrorKind::Format:
    case ErrorKind::Integrity:
    case ErrorKind::Version: return kDataError;
    case ErrorKind::Contract:
    case ErrorKind::Shape: return kInternal;
  }
  return kInternal;
}

void add_common(CLI::App* sub, Common& o, bool with_output) {
  sub->add_option("-c,--config", o.config, "Run configuration (INI). A manifest.ini from an earlier run also works.");
  sub->add_option("--set", o.overrides, "Override one setting, e.g. --set optimizer.lr=1e-3 (repeatable)");
  sub->add_option("--seed", o.seed, "Override run.seed");
  if (with_output) {
    sub->add_option("-o,--output-dir", o.output_dir, "Override run.output_dir");
    sub->add_flag("--force", o.force, "Overwrite existing outputs");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geotext: layout-aware document models (synthesis, ingestion, pre-training, fine-tuning, evaluation)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", GEOTEXT_VERSION);

  Common o;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus ([synth] section) as dataset files");
  add_common(synth, o, true);

  std::string ingest_path, ingest_format = "funsd_like", ingest_out;
  bool ingest_force = false;
  auto* ingest = app.add_subcommand("ingest", "Parse and validate a dataset or hOCR input and print statistics");
  ingest->add_option("path", ingest_path, "Dataset file or directory")->required();
  ingest->add_option("-f,--format", ingest_format, "funsd_like, slots_like, classes_like or hocr")->capture_default_str();
  ingest->add_option("--out", ingest_out, "Also write the validated documents as a .jsonl dataset");
  ingest->add_flag("--force", ingest_force, "Overwrite --out if it exists");

  auto* pretrain = app.add_subcommand("pretrain", "Masked visual-language pre-training ([pretrain] section)");
  add_common(pretrain, o, true);
  auto* finetune = app.add_subcommand("finetune", "Fine-tune on a labeled dataset ([finetune] section)");
  add_common(finetune, o, true);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled dataset ([eval] section)");
  add_common(eval, o, true);

  std::string validate_for = "validate-config";
  auto* validate = app.add_subcommand("validate-config", "Check a configuration and list every violation");
  add_common(validate, o, true);
  validate->add_option("--for", validate_for, "Command whose requirements to check (synth, pretrain, finetune, eval)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*ingest) return cmd_ingest(ingest_path, ingest_format, ingest_out, ingest_force);
    if (*pretrain) return cmd_pretrain(o);
    if (*finetune) return cmd_finetune(o);
    if (*eval) return cmd_eval(o);
    if (*validate) return cmd_validate(o, validate_for);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
