#include "geotext/features.hpp"

#include "geotext/binio.hpp"
#include "geotext/checkpoint.hpp"
#include "geotext/error.hpp"
#include "geotext/rng.hpp"

namespace geotext {

namespace {

constexpr std::string_view kMagic{"GTXFEAT\0", 8};
constexpr double kStyleWeight = 0.75;
constexpr double kNoiseWeight = 0.25;

/// Deterministic value in [-1, 1] from a hash key and component index.
double unit(std::uint64_t key, std::size_t k) {
  const std::uint64_t h = hash_combine(key, k);
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double style_component(std::uint32_t style, std::size_t k) {
  if (style == kStyleNone) return 0.0;
  return unit(hash_combine(0x5717E5ULL, style), k);
}

}  // namespace

PseudoFeatureProvider::PseudoFeatureProvider(std::size_t dim) : dim_(dim) {
  require(dim >= 1, "pseudo features: dim must be >= 1");
}

void PseudoFeatureProvider::add(const RawDocument& doc) {
  DocInfo info{doc.page_width, doc.page_height, {}, {}};
  for (const auto& w : doc.words) {
    info.boxes.push_back(normalize_bbox(w.box, doc.page_width, doc.page_height));
    info.styles.push_back(w.style);
  }
  docs_[doc.doc_id] = std::move(info);
}

const PseudoFeatureProvider::DocInfo& PseudoFeatureProvider::doc(const std::string& doc_id) const {
  auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw DataError("no image features for document '" + doc_id + "'");
  return it->second;
}

std::vector<double> PseudoFeatureProvider::token_feature(const std::string& doc_id, std::size_t word_index) const {
  const DocInfo& d = doc(doc_id);
  if (word_index >= d.boxes.size()) {
    throw DataError("no image feature for word " + std::to_string(word_index) + " of document '" + doc_id + "'");
  }
  const BBox& b = d.boxes[word_index];
  std::uint64_t key = hash_combine(hash_string(doc_id), word_index);
  key = hash_combine(key, static_cast<std::uint64_t>(b.x0) | static_cast<std::uint64_t>(b.y0) << 16 |
                              static_cast<std::uint64_t>(b.x1) << 32 | static_cast<std::uint64_t>(b.y1) << 48);
  key = hash_combine(key, d.styles[word_index]);
  std::vector<double> v(dim_);
  for (std::size_t k = 0; k < dim_; ++k) {
    v[k] = kStyleWeight * style_component(d.styles[word_index], k) + kNoiseWeight * unit(key, k);
  }
  return v;
}

std::vector<double> PseudoFeatureProvider::page_feature(const std::string& doc_id) const {
  const DocInfo& d = doc(doc_id);
  const std::uint64_t key = hash_combine(hash_combine(hash_string(doc_id), static_cast<std::uint64_t>(d.page_w)),
                                         static_cast<std::uint64_t>(d.page_h));
  std::vector<double> v(dim_);
  for (std::size_t k = 0; k < dim_; ++k) {
    double mean = 0.0;
    for (auto s : d.styles) mean += style_component(s, k);
    if (!d.styles.empty()) mean /= static_cast<double>(d.styles.size());
    v[k] = kStyleWeight * mean + kNoiseWeight * unit(key, k);
  }
  return v;
}

std::unique_ptr<FeatureProvider> pseudo_features(const RawDocument& doc, std::size_t dim) {
  auto p = std::make_unique<PseudoFeatureProvider>(dim);
  p->add(doc);
  return p;
}

std::string serialize_features(std::size_t dim, std::span<const FeatureRecord> records) {
  require(dim >= 1, "feature file: dim must be >= 1");
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kFeatureFileVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u64(records.size());
  for (const auto& r : records) {
    w.str32(r.doc_id);
    w.i64(r.index);
    w.u32(static_cast<std::uint32_t>(r.values.size()));
    for (double v : r.values) w.f64(v);
  }
  w.u64(hash_string(w.buffer()));
  return std::move(w.buffer());
}

void write_feature_file(const std::filesystem::path& path, std::size_t dim, std::span<const FeatureRecord> records) {
  write_file_atomic(path, serialize_features(dim, records));
}

FileFeatureProvider FileFeatureProvider::from_bytes(std::string_view bytes) {
  if (bytes.size() < 8 + 4 + 4 + 8 + 8) throw FormatError("feature file: too short (truncated)");
  if (bytes.substr(0, 8) != kMagic) throw FormatError("feature file: bad magic bytes");
  binio::Reader r(bytes.substr(8, bytes.size() - 16), "feature file");
  const std::uint32_t version = r.u32();
  if (version != kFeatureFileVersion) throw VersionError("feature file: unsupported version " + std::to_string(version));
  FileFeatureProvider p;
  p.dim_ = r.u32();
  if (p.dim_ == 0) throw FormatError("feature file: dim is 0");
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = r.str32();
    const std::int64_t index = r.i64();
    const std::uint32_t n = r.u32();
    if (n != p.dim_) {
      throw FormatError("feature file: record " + std::to_string(i) + " ('" + id + "') has " + std::to_string(n) +
                        " values, header dim is " + std::to_string(p.dim_));
    }
    if (index < kPageIndex) throw FormatError("feature file: record " + std::to_string(i) + " has negative word index");
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    if (!p.table_.emplace(std::make_pair(std::move(id), index), std::move(v)).second) {
      throw FormatError("feature file: duplicate record " + std::to_string(i));
    }
  }
  if (r.remaining() != 0) throw FormatError("feature file: trailing bytes before checksum");
  binio::Reader tail(bytes.substr(bytes.size() - 8), "feature file checksum");
  if (tail.u64() != hash_string(bytes.substr(0, bytes.size() - 8))) throw IntegrityError("feature file: checksum mismatch");
  return p;
}

std::vector<double> FileFeatureProvider::token_feature(const std::string& doc_id, std::size_t word_index) const {
  auto it = table_.find({doc_id, static_cast<std::int64_t>(word_index)});
  if (it == table_.end()) {
    throw DataError("feature file has no vector for (" + doc_id + ", " + std::to_string(word_index) + ")");
  }
  return it->second;
}

std::vector<double> FileFeatureProvider::page_feature(const std::string& doc_id) const {
  auto it = table_.find({doc_id, kPageIndex});
  if (it == table_.end()) throw DataError("feature file has no vector for (" + doc_id + ", PAGE)");
  return it->second;
}

std::vector<FeatureRecord> FileFeatureProvider::records() const {
  std::vector<FeatureRecord> out;
  for (const auto& [k, v] : table_) out.push_back(FeatureRecord{k.first, k.second, v});
  return out;
}

std::unique_ptr<FileFeatureProvider> file_features(const std::filesystem::path& path) {
  return std::make_unique<FileFeatureProvider>(FileFeatureProvider::from_bytes(read_file(path)));
}

std::vector<FeatureRecord> collect_features(const FeatureProvider& provider, std::span<const RawDocument> docs) {
  std::vector<FeatureRecord> out;
  for (const auto& d : docs) {
    out.push_back(FeatureRecord{d.doc_id, kPageIndex, provider.page_feature(d.doc_id)});
    for (std::size_t i = 0; i < d.words.size(); ++i) {
      out.push_back(FeatureRecord{d.doc_id, static_cast<std::int64_t>(i), provider.token_feature(d.doc_id, i)});
    }
  }
  return out;
}

ImageFeatures gather_features(const FeatureProvider& provider, const TokenSequence& s) {
  const std::size_t dim = provider.dim();
  ImageFeatures f{Tensor(Shape{s.max_len(), dim}), Tensor(Shape{dim}), std::vector<unsigned char>(s.max_len(), 0)};
  // Subword pieces share their word's vector; fetch each word once.
  std::int32_t last = -1;
  std::vector<double> v;
  for (std::size_t i = 0; i < s.max_len(); ++i) {
    if (!s.mask[i] || s.word_ids[i] < 0) continue;
    if (s.word_ids[i] != last) {
      v = provider.token_feature(s.doc_id, static_cast<std::size_t>(s.word_ids[i]));
      last = s.word_ids[i];
    }
    std::copy(v.begin(), v.end(), f.tokens.row(i).begin());
    f.is_word[i] = 1;
  }
  const auto page = provider.page_feature(s.doc_id);
  std::copy(page.begin(), page.end(), f.page.data().begin());
  return f;
}

}  // namespace geotext
