#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "geotext/metrics.hpp"
#include "geotext/rng.hpp"

namespace geotext::testing {

/// Reference decoder written as a span enumeration: [i, j] is an entity iff
/// it reads S-X (i == j) or B-X I-X* E-X. Shares no code with the library.
inline std::vector<Entity> brute_force_decode(const std::vector<std::string>& tags) {
  std::vector<Entity> out;
  const std::size_t n = tags.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const std::string& first = tags[i];
      if (first == "O") break;
      const std::string type = first.substr(2);
      bool ok;
      if (i == j) {
        ok = first[0] == 'S';
      } else {
        ok = first[0] == 'B' && tags[j] == "E-" + type;
        for (std::size_t k = i + 1; ok && k < j; ++k) ok = tags[k] == "I-" + type;
      }
      if (ok) out.push_back(Entity{i, j, type});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct OracleTally {
  std::size_t cases = 0;
  std::size_t mismatches = 0;
};

/// Every tag sequence of length 1..max_len over the two-type tagset.
inline OracleTally exhaustive_bieso(std::size_t max_len = 5) {
  const std::vector<std::string> types{"Q", "A"};
  const auto tagset = make_bieso_tagset(types);
  OracleTally t;
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::size_t> digits(len, 0);
    for (;;) {
      std::vector<std::string> tags;
      for (auto d : digits) tags.push_back(tagset[d]);
      ++t.cases;
      const auto want = brute_force_decode(tags);
      if (decode_bieso(tags, tagset) != want || decode_bieso_ids(digits, tagset) != want) ++t.mismatches;
      std::size_t k = 0;
      while (k < len && ++digits[k] == tagset.size()) digits[k++] = 0;
      if (k == len) break;
    }
  }
  return t;
}

inline bool close(double a, double b) { return std::fabs(a - b) <= 1e-12; }

/// P/R/F1 from the textbook definitions over explicit sets.
inline bool prf_matches(const Prf& got, std::size_t inter, std::size_t n_pred, std::size_t n_gold) {
  const double p = n_pred ? static_cast<double>(inter) / n_pred : 0.0;
  const double r = n_gold ? static_cast<double>(inter) / n_gold : 0.0;
  const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  return got.tp == inter && got.n_pred == n_pred && got.n_gold == n_gold && close(got.precision, p) &&
         close(got.recall, r) && close(got.f1, f);
}

inline OracleTally random_entity_f1_cases(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const char* labels[] = {"question", "answer", "header"};
  OracleTally t;
  auto draw = [&](std::size_t count) {
    std::vector<Entity> v;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t s = rng.below(8);
      v.push_back(Entity{s, s + rng.below(3), labels[rng.below(3)]});
    }
    return v;
  };
  for (std::size_t c = 0; c < n; ++c) {
    const auto pred = draw(rng.below(10));
    const auto gold = draw(rng.below(10));
    const std::set<Entity> ps(pred.begin(), pred.end()), gs(gold.begin(), gold.end());
    std::vector<Entity> inter;
    std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::back_inserter(inter));
    ++t.cases;
    if (!prf_matches(entity_f1(pred, gold), inter.size(), ps.size(), gs.size())) ++t.mismatches;
  }
  return t;
}

/// Random documents of slot predictions, scored per document and pooled.
inline OracleTally random_slot_cases(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const char* keys[] = {"company", "date", "address", "total"};
  const char* values[] = {"ACME", "ACME CO", "2019-01-02", "4.50", "4.5"};
  OracleTally t;
  auto draw = [&] {
    SlotMap m;
    for (const char* k : keys) {
      if (rng.bernoulli(0.7)) m[k] = values[rng.below(5)];
    }
    return m;
  };
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<SlotMap> preds, golds;
    std::size_t inter = 0, np = 0, ng = 0;
    const std::size_t docs = 1 + rng.below(4);
    bool single_ok = true;
    for (std::size_t d = 0; d < docs; ++d) {
      preds.push_back(draw());
      golds.push_back(draw());
      std::set<std::pair<std::string, std::string>> p(preds.back().begin(), preds.back().end());
      std::set<std::pair<std::string, std::string>> g(golds.back().begin(), golds.back().end());
      std::vector<std::pair<std::string, std::string>> i;
      std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(i));
      single_ok = single_ok && prf_matches(slot_exact_match_f1(preds.back(), golds.back()), i.size(), p.size(), g.size());
      inter += i.size();
      np += p.size();
      ng += g.size();
    }
    ++t.cases;
    if (!single_ok || !prf_matches(slot_exact_match_f1(preds, golds), inter, np, ng)) ++t.mismatches;
  }
  return t;
}

}  // namespace geotext::testing
