#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geotext/document.hpp"
#include "geotext/pretrain.hpp"
#include "geotext/rng.hpp"
#include "geotext/vocab.hpp"

namespace geotext::synth {

/// Default word list shared by every generator.
const std::vector<std::string>& default_lexicon();

/// Fixed collocations partitioning default_lexicon() into 2- and 3-word
/// phrases. Every word belongs to exactly one phrase, so a masked word is
/// recoverable from its phrase neighbours; roles are still not.
const std::vector<std::vector<std::string>>& default_phrasebook();

/// Key/value form layout. Keys sit in a left column; each value starts at
/// value_x, either on its key's line or on the next line. With a shared
/// lexicon and identical length distributions for both roles, the
/// question/answer role of a word is recoverable only from its box.
struct FormSpec {
  std::size_t n_pairs = 6;
  int page_width = 850;
  int page_height = 1100;
  std::vector<std::string> key_lexicon = default_lexicon();
  std::vector<std::string> value_lexicon = default_lexicon();
  // When non-empty, each entity is one phrase drawn from here (both roles)
  // instead of independent lexicon words.
  std::vector<std::vector<std::string>> phrases{};
  int min_words = 1;   // words per entity, both roles
  int max_words = 3;
  double below_rate = 0.3;   // probability a value goes on the line below its key
  double label_noise = 0.0;  // probability a pair's labels are swapped
  double style_rate = 0.0;   // probability a key entity is rendered bold
  int left_margin = 40;
  int top_margin = 60;
  int line_height = 22;
  int line_gap = 14;
  int char_width = 9;
  int word_gap = 8;

  /// x where value words start (keys always end before it).
  int value_x() const { return page_width * 45 / 100; }
  void validate() const;
};

/// One form with question/answer entities (word spans). Doc id must be
/// supplied by the caller.
RawDocument gen_form(const FormSpec& spec, Rng& rng, std::string doc_id);

/// True iff every entity's label agrees with the side of value_x its first
/// word starts on (the geometry alone determines the roles).
bool form_layout_self_check(const RawDocument& doc, const FormSpec& spec);

enum class LayoutClass : std::size_t { OneColumn = 0, TwoColumn = 1, HeaderBlock = 2, Scattered = 3 };
inline constexpr std::size_t kNumLayoutClasses = 4;
const std::vector<std::string>& layout_class_names();

struct ClassDocSpec {
  int page_width = 850;
  int page_height = 1100;
  int min_words = 20;
  int max_words = 40;
  std::vector<std::string> lexicon = default_lexicon();
  // When non-empty, the body is a run of whole phrases cut to the drawn length.
  std::vector<std::vector<std::string>> phrases{};
};

/// Word content is drawn identically for every class; only geometry and
/// style flags depend on the class.
RawDocument gen_classdoc(std::size_t class_id, Rng& rng, const ClassDocSpec& spec, std::string doc_id);

/// Receipt with company / date / address / total slots.
RawDocument gen_receipt(Rng& rng, std::string doc_id, const std::vector<std::string>& lexicon = default_lexicon());

/// MDC tag inventory of the pretraining mixture.
inline constexpr std::size_t kNumPretrainTags = 4;
const std::vector<std::string>& pretrain_tag_names();  // form, classdoc, two_column_geometry, header

/// Pretraining text is phrase-structured so MVLM has something to learn
/// beyond unigram frequencies.
struct PretrainMix {
  double form_fraction = 0.5;
  FormSpec form{.phrases = default_phrasebook()};
  ClassDocSpec classdoc{.phrases = default_phrasebook()};
};

/// Expected marginal of each MDC tag under `mix` (classes uniform).
std::vector<double> expected_tag_marginals(const PretrainMix& mix);

/// Raw pretraining documents (forms and class documents) with MDC tags.
/// Document i is generated from derive_seed(seed, i).
std::vector<RawDocument> gen_pretrain_documents(std::size_t n, std::uint64_t seed, const PretrainMix& mix = {});

/// Encodes documents for MVLM/MDC pretraining.
std::vector<PretrainExample> to_pretrain_examples(std::span<const RawDocument> docs, const Vocabulary& vocab,
                                                  std::size_t max_len);

/// gen_pretrain_documents followed by to_pretrain_examples.
std::vector<PretrainExample> gen_pretrain_corpus(std::size_t n, std::uint64_t seed, const Vocabulary& vocab,
                                                 std::size_t max_len, const PretrainMix& mix = {});

/// Every word of every document, for build_vocab.
std::vector<std::string> corpus_words(std::span<const RawDocument> docs);

std::vector<RawDocument> gen_forms(std::size_t n, std::uint64_t seed, const FormSpec& spec = {},
                                   const std::string& prefix = "form");
/// Balanced: class i % 4 for document i.
std::vector<RawDocument> gen_classdocs(std::size_t n, std::uint64_t seed, const ClassDocSpec& spec = {},
                                       const std::string& prefix = "doc");
std::vector<RawDocument> gen_receipts(std::size_t n, std::uint64_t seed, const std::string& prefix = "receipt");

}  // namespace geotext::synth
