#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geotext/model.hpp"
#include "geotext/optim.hpp"
#include "geotext/pretrain.hpp"

namespace geotext::cli {

/// Every setting a run can use. Sections mirror the config file; see
/// docs/formats.md for the full key list.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;

  ModelConfig model;            // vocab_size here is the build_vocab target
  OptimizerConfig optimizer;    // total_steps is derived per command
  MaskingPolicy masking;

  struct Data {
    std::string vocab;     // existing vocabulary; built from the data when empty
    std::string features;  // feature file; pseudo features when empty
  } data;

  struct Synth {
    std::string kind = "forms";  // forms | receipts | classdocs | pretrain
    std::map<std::string, std::size_t> splits{{"train", 100}};
    std::size_t n_pairs = 6;
    double below_rate = 0.3;
    double label_noise = 0.0;
    double style_rate = 0.0;
    double form_fraction = 0.5;
  } synth;

  struct Pretrain {
    std::uint64_t steps = 500;
    std::optional<std::uint64_t> stop_after;
    std::size_t batch_size = 8;
    bool mvlm = true;
    bool mdc = true;
    std::string corpus;  // dataset path; synthetic corpus when empty
    std::string corpus_format = "funsd_like";
    std::size_t corpus_docs = 1000;
    std::size_t heldout_docs = 100;
    std::string resume;
  } pretrain;

  struct Finetune {
    std::string task = "seqlabel";
    std::string train, dev;
    std::string format;               // defaults from task
    std::vector<std::string> labels;  // entity types, slot keys or class names; defaults from task
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    std::optional<double> stop_at;
    std::string init;  // checkpoint to start from
  } finetune;

  struct Eval {
    std::string checkpoint;
    std::string data;
  } eval;

  /// Canonical INI text with every key, in a fixed order. Paths are written
  /// as stored (absolute after resolve_paths).
  std::string to_text() const;
  std::uint64_t hash() const;

  std::string format_name() const;                 // finetune.format or the task default
  std::vector<std::string> label_names() const;    // finetune.labels or the task default
};

/// Parses INI text. `overrides` are section.key=value pairs applied on top.
/// All problems are collected and raised together as one ConfigError.
/// Relative paths resolve against `base_dir`. A [manifest] section is ignored.
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides,
                           const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Command-specific checks (paths exist, ranges, task/format agreement).
/// Returns every violation; empty means valid.
std::vector<std::string> validate_for(const RunConfig& c, const std::string& command);

}  // namespace geotext::cli
