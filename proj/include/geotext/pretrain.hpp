#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "geotext/checkpoint.hpp"
#include "geotext/model.hpp"
#include "geotext/optim.hpp"
#include "geotext/rng.hpp"
#include "geotext/vocab.hpp"

namespace geotext {

struct MaskingPolicy {
  double select_rate = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;

  void validate() const;
};

enum class Replacement : std::uint8_t { Mask, Random, Keep };

struct MaskTarget {
  std::size_t position;
  std::uint32_t original_id;
  Replacement how;
  friend bool operator==(const MaskTarget&, const MaskTarget&) = default;
};

struct MaskedSequence {
  TokenSequence sequence;
  std::vector<MaskTarget> targets;
};

/// Independently selects each real non-special token with probability
/// select_rate and rewrites selected ids ([MASK] / random non-special id /
/// unchanged). Boxes, positions, segments and the mask are never touched.
MaskedSequence apply_masking(const TokenSequence& s, const Vocabulary& vocab, const MaskingPolicy& policy, Rng& rng);

struct PretrainExample {
  TokenSequence sequence;
  std::optional<std::vector<bool>> mdc_tags;
};

/// Mean cross-entropy of the tied MVLM head at the target positions. An
/// empty target list yields 0 and bumps mvlm_empty_target_count().
double mvlm_loss(const ModelParams& p, const ModelConfig& cfg, const TokenSequence& masked,
                 std::span<const MaskTarget> targets);
std::uint64_t mvlm_empty_target_count();

/// Mean sigmoid binary cross-entropy over the tag set.
double mdc_loss(const ModelParams& p, const Tensor& cls_vector, const std::vector<bool>& tags);

/// Graph pieces shared by run_pretrain and the gradient-check harness.
ag::Var mvlm_loss_var(BoundParams& b, ag::Var h, std::span<const MaskTarget> targets);
ag::Var mdc_loss_var(BoundParams& b, ag::Var h, const std::vector<bool>& tags);
/// Encoder states of the real prefix of `s` (text + layout, no image).
ag::Var encode_sequence(BoundParams& b, const ModelConfig& cfg, const TokenSequence& s);

struct Objectives {
  bool mvlm = true;
  bool mdc = false;
};

struct LossRecord {
  std::uint64_t step;
  double lr;
  double mvlm;
  double mdc;
};

/// `step<TAB>lr<TAB>mvlm_loss<TAB>mdc_loss`, one line per record.
void write_loss_curve(std::ostream& os, std::span<const LossRecord> records);

struct PretrainOptions {
  std::uint64_t steps = 500;  // schedule length
  /// Stop after this step (an interrupted run); the schedule still spans `steps`.
  std::optional<std::uint64_t> stop_after;
  std::size_t batch_size = 8;
  Objectives objectives;
  MaskingPolicy masking;
  std::uint64_t seed = 0;
  /// Continue an earlier run of the same configuration; its optimizer state
  /// and steps_taken are honored so the trajectory matches an uninterrupted run.
  std::optional<Checkpoint> resume;
  std::function<void(const LossRecord&)> on_step;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> curve;
};

/// Per step: take the next batch of the seeded epoch order, mask, forward,
/// loss = mvlm (+ mdc), backward, Adam at lr_at(step). Step t uses masking
/// stream derive_seed(seed', t), so a resumed run is bit-identical.
PretrainResult run_pretrain(std::span<const PretrainExample> corpus, const Vocabulary& vocab, const ModelConfig& cfg,
                            OptimizerConfig opt, const PretrainOptions& options);

/// Mean masked-token cross-entropy over `examples` with a fixed masking seed.
double heldout_mvlm_loss(const ModelParams& p, const ModelConfig& cfg, std::span<const PretrainExample> examples,
                         const Vocabulary& vocab, const MaskingPolicy& policy, std::uint64_t seed);

}  // namespace geotext
