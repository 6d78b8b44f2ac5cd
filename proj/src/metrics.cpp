#include "geotext/metrics.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "geotext/error.hpp"

namespace geotext {

std::vector<std::string> make_bieso_tagset(std::span<const std::string> types) {
  std::vector<std::string> out{"O"};
  std::set<std::string> seen;
  for (const auto& t : types) {
    require(!t.empty(), "make_bieso_tagset: empty type name");
    require(seen.insert(t).second, "make_bieso_tagset: duplicate type " + t);
    for (const char* p : {"B-", "I-", "E-", "S-"}) out.push_back(p + t);
  }
  return out;
}

namespace {

struct Parsed {
  char prefix;  // 'O', 'B', 'I', 'E', 'S'
  std::string type;
};

Parsed parse_tag(const std::string& tag) {
  if (tag == "O") return {'O', {}};
  if (tag.size() >= 3 && tag[1] == '-' && std::string_view("BIES").find(tag[0]) != std::string_view::npos)
    return {tag[0], tag.substr(2)};
  throw ContractError("decode_bieso: malformed tag '" + tag + "'");
}

std::vector<Entity> decode_parsed(const std::vector<Parsed>& t) {
  std::vector<Entity> out;
  std::size_t i = 0;
  while (i < t.size()) {
    if (t[i].prefix == 'S') {
      out.push_back({i, i, t[i].type});
      ++i;
    } else if (t[i].prefix == 'B') {
      std::size_t j = i + 1;
      while (j < t.size() && t[j].prefix == 'I' && t[j].type == t[i].type) ++j;
      if (j < t.size() && t[j].prefix == 'E' && t[j].type == t[i].type) {
        out.push_back({i, j, t[i].type});
        i = j + 1;
      } else {
        i = j;  // the breaking tag may start a new entity
      }
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace

std::vector<Entity> decode_bieso(std::span<const std::string> tags, std::span<const std::string> tagset) {
  std::set<std::string_view> allowed(tagset.begin(), tagset.end());
  std::vector<Parsed> parsed;
  parsed.reserve(tags.size());
  for (const auto& tag : tags) {
    if (!allowed.contains(tag)) throw ContractError("decode_bieso: tag '" + tag + "' is not in the tagset");
    parsed.push_back(parse_tag(tag));
  }
  return decode_parsed(parsed);
}

std::vector<Entity> decode_bieso_ids(std::span<const std::size_t> tags, std::span<const std::string> tagset) {
  std::vector<Parsed> table;
  for (const auto& t : tagset) table.push_back(parse_tag(t));
  std::vector<Parsed> parsed;
  parsed.reserve(tags.size());
  for (auto id : tags) {
    require(id < table.size(), "decode_bieso: tag index " + std::to_string(id) + " outside the tagset");
    parsed.push_back(table[id]);
  }
  return decode_parsed(parsed);
}

std::vector<std::size_t> encode_bieso(std::span<const Entity> entities, std::size_t length,
                                      std::span<const std::string> tagset) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tagset.size(); ++i) index.emplace(tagset[i], i);
  auto id = [&](const std::string& tag) {
    auto it = index.find(tag);
    if (it == index.end()) throw ConfigError("tag '" + tag + "' is not in the tagset");
    return it->second;
  };
  std::vector<std::size_t> out(length, id("O"));
  std::vector<bool> used(length, false);
  for (const auto& e : entities) {
    require(e.start <= e.end && e.end < length, "encode_bieso: entity outside the sequence");
    for (std::size_t i = e.start; i <= e.end; ++i) {
      require(!used[i], "encode_bieso: overlapping entities");
      used[i] = true;
    }
    if (e.start == e.end) {
      out[e.start] = id("S-" + e.label);
    } else {
      out[e.start] = id("B-" + e.label);
      for (std::size_t i = e.start + 1; i < e.end; ++i) out[i] = id("I-" + e.label);
      out[e.end] = id("E-" + e.label);
    }
  }
  return out;
}

Prf prf_from_counts(std::size_t tp, std::size_t n_pred, std::size_t n_gold) {
  Prf r;
  r.tp = tp;
  r.n_pred = n_pred;
  r.n_gold = n_gold;
  r.precision = n_pred ? static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
  r.recall = n_gold ? static_cast<double>(tp) / static_cast<double>(n_gold) : 0.0;
  // 2tp/(pred+gold) equals the harmonic mean of P and R without rounding twice.
  r.f1 = (n_pred + n_gold) ? 2.0 * static_cast<double>(tp) / static_cast<double>(n_pred + n_gold) : 0.0;
  return r;
}

Prf entity_f1(std::span<const Entity> pred, std::span<const Entity> gold) {
  const std::set<Entity> p(pred.begin(), pred.end()), g(gold.begin(), gold.end());
  std::size_t tp = 0;
  for (const auto& e : p) tp += g.contains(e) ? 1 : 0;
  return prf_from_counts(tp, p.size(), g.size());
}

void SlotCounts::add(const SlotMap& pred, const SlotMap& gold) {
  n_pred += pred.size();
  n_gold += gold.size();
  for (const auto& [k, v] : pred) {
    auto it = gold.find(k);
    if (it != gold.end() && it->second == v) ++tp;
  }
}

Prf slot_exact_match_f1(const SlotMap& pred, const SlotMap& gold) {
  SlotCounts c;
  c.add(pred, gold);
  return c.score();
}

Prf slot_exact_match_f1(std::span<const SlotMap> pred, std::span<const SlotMap> gold) {
  require(pred.size() == gold.size(), "slot_exact_match_f1: document counts differ");
  SlotCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) c.add(pred[i], gold[i]);
  return c.score();
}

}  // namespace geotext
