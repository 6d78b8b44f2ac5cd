#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "geotext/document.hpp"

namespace geotext {

/// "O" followed by B-t, I-t, E-t, S-t for every type t, in the given order.
std::vector<std::string> make_bieso_tagset(std::span<const std::string> types);

/// Strict decoding: S-X is a singleton, B-X (I-X)* E-X a span; every other
/// fragment is dropped. Result sorted. Unknown tag strings raise ContractError.
std::vector<Entity> decode_bieso(std::span<const std::string> tags, std::span<const std::string> tagset);
/// Same over tag indices into `tagset`.
std::vector<Entity> decode_bieso_ids(std::span<const std::size_t> tags, std::span<const std::string> tagset);

/// Tag indices spelling out `entities` over `length` positions (the inverse
/// of decode_bieso for non-overlapping spans).
std::vector<std::size_t> encode_bieso(std::span<const Entity> entities, std::size_t length,
                                      std::span<const std::string> tagset);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;
  friend bool operator==(const Prf&, const Prf&) = default;
};

/// Scores from raw counts; zero denominators yield 0.
Prf prf_from_counts(std::size_t tp, std::size_t n_pred, std::size_t n_gold);

/// Exact match on (start, end, label). Duplicates count once.
Prf entity_f1(std::span<const Entity> pred, std::span<const Entity> gold);

using SlotMap = std::map<std::string, std::string>;

/// Counts accumulated over documents (micro average).
struct SlotCounts {
  std::size_t tp = 0, n_pred = 0, n_gold = 0;
  void add(const SlotMap& pred, const SlotMap& gold);
  Prf score() const { return prf_from_counts(tp, n_pred, n_gold); }
};

/// A predicted slot is correct iff its string equals the gold string of the
/// same key exactly.
Prf slot_exact_match_f1(const SlotMap& pred, const SlotMap& gold);
Prf slot_exact_match_f1(std::span<const SlotMap> pred, std::span<const SlotMap> gold);

}  // namespace geotext
