#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geotext/autograd.hpp"
#include "geotext/sequence.hpp"
#include "geotext/tensor.hpp"

namespace geotext {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_len = 128;
  std::size_t vocab_size = 512;
  std::size_t coord_vocab = kCoordVocab;  // fixed
  std::size_t img_feat_dim = 16;
  std::size_t num_doc_classes = 4;
  std::size_t num_mdc_tags = 4;
  std::vector<std::string> tagset{"O"};
  // Modality switches. use_layout=false zeroes and freezes both 2-D tables;
  // use_image=false makes image fusion the identity.
  bool use_layout = true;
  bool use_image = false;
  double ln_eps = 1e-12;

  void validate() const;
  /// key=value lines, fixed key order. Round-trips through from_text.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gamma, ln1_beta;
  Tensor w1, b1, w2, b2;
  Tensor ln2_gamma, ln2_beta;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// All learnable tensors. table_x serves both x0 and x1 lookups and table_y
/// both y0 and y1: there is exactly one storage per axis.
struct ModelParams {
  Tensor word_table;   // [vocab x hidden]
  Tensor pos1d_table;  // [max_len x hidden]
  Tensor segment_table;  // [2 x hidden]
  Tensor table_x;      // [1001 x hidden]
  Tensor table_y;      // [1001 x hidden]
  std::vector<LayerParams> layers;
  Tensor mvlm_bias;    // [vocab]
  Tensor mdc_w, mdc_b;  // [hidden x tags], [tags]
  Tensor seqlabel_w, seqlabel_b;  // [hidden x |tagset|]
  Tensor docclass_w, docclass_b;  // [2*hidden x classes]
  Tensor img_proj_w, img_proj_b;  // [img_feat_dim x hidden]

  /// Every tensor with its stable name, in canonical (checkpoint) order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> tensors();

  /// Shapes agree with `cfg`; all values finite.
  void validate(const ModelConfig& cfg) const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Names of tensors copied by init_from_text_checkpoint.
bool is_text_backbone_tensor(std::string_view name);

/// Truncated-normal(0.02) weights and tables, zero biases, unit layer-norm
/// gains. Deterministic per seed. With use_layout=false the 2-D tables are
/// zero and frozen.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Applies the modality switches' freezing to an existing parameter set.
void apply_modality(const ModelConfig& cfg, ModelParams& p);

/// Starts from init_params(cfg, seed) and copies the word / 1-D position /
/// segment tables and every encoder layer from `text_params`. The 2-D tables
/// and all heads keep their fresh values. Throws ConfigError listing each
/// differing field when the shared architecture does not match.
ModelParams init_from_text_checkpoint(const ModelConfig& cfg, const ModelConfig& text_cfg,
                                      const ModelParams& text_params, std::uint64_t seed);

/// Image features aligned with a TokenSequence: one row per token (zero rows
/// for [CLS]/[SEP]/[PAD]) plus the whole-page vector.
struct ImageFeatures {
  Tensor tokens;                     // [max_len x img_feat_dim]
  Tensor page;                       // [img_feat_dim]
  std::vector<unsigned char> is_word;  // 1 where the row belongs to a real word token
};

// ---------------------------------------------------------------------------
// Graph-level forward pass, used by training.

/// Parameters bound as leaves of one graph.
class BoundParams {
 public:
  BoundParams(ag::Graph& g, const ModelParams& p);
  ag::Graph& graph() const noexcept { return *g_; }

  ag::Var word, pos1d, segment, table_x, table_y;
  struct Layer {
    ag::Var wq, bq, wk, bk, wv, bv, wo, bo, ln1_gamma, ln1_beta, w1, b1, w2, b2, ln2_gamma, ln2_beta;
  };
  std::vector<Layer> layers;
  ag::Var mvlm_bias, mdc_w, mdc_b, seqlabel_w, seqlabel_b, docclass_w, docclass_b, img_proj_w, img_proj_b;

  /// Gradients in ModelParams::named() order (after graph.backward()).
  std::vector<Tensor> grads() const;

 private:
  ag::Graph* g_;
};

/// Forward computations over the first `rows` tokens of a sequence. The
/// training path passes rows = real_length() (padding never enters the
/// graph); the tensor-level API below passes max_len with a key mask.
namespace fwd {
ag::Var embed(BoundParams& p, const TokenSequence& s, std::size_t rows);
/// key_mask empty means every row is a live key.
ag::Var encode(BoundParams& p, const ModelConfig& cfg, ag::Var h0, const std::vector<unsigned char>& key_mask);
/// Returns (fused states, cls image embedding [1 x hidden]).
std::pair<ag::Var, ag::Var> fuse_image(BoundParams& p, const ModelConfig& cfg, ag::Var h,
                                       const ImageFeatures* features);
ag::Var mvlm_logits(BoundParams& p, ag::Var h, const std::vector<std::size_t>& positions);
ag::Var cls_vector(ag::Var h);
ag::Var mdc_logits(BoundParams& p, ag::Var cls);
ag::Var seqlabel_logits(BoundParams& p, ag::Var h);
ag::Var docclass_logits(BoundParams& p, ag::Var cls, ag::Var cls_image);
}  // namespace fwd

// ---------------------------------------------------------------------------
// Tensor-level forward API (no gradients).

Tensor embed(const ModelParams& p, const ModelConfig& cfg, const TokenSequence& s);
Tensor encode(const ModelParams& p, const ModelConfig& cfg, const Tensor& h0, std::span<const std::uint8_t> mask);
/// Attention probabilities of one layer/head, [max_len x max_len]; for tests.
Tensor attention_probs(const ModelParams& p, const ModelConfig& cfg, const Tensor& h0,
                       std::span<const std::uint8_t> mask, std::size_t layer, std::size_t head);
std::pair<Tensor, Tensor> fuse_image(const ModelParams& p, const ModelConfig& cfg, const Tensor& h,
                                     const ImageFeatures* features);
/// [|positions| x vocab]; an empty position list yields an empty Tensor.
Tensor mvlm_logits(const ModelParams& p, const Tensor& h, std::span<const std::size_t> positions);
Tensor mdc_logits(const ModelParams& p, const Tensor& cls_vector);
Tensor seqlabel_logits(const ModelParams& p, const Tensor& h);
Tensor docclass_logits(const ModelParams& p, const Tensor& cls_vector, const Tensor& cls_image);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> row);

}  // namespace geotext
