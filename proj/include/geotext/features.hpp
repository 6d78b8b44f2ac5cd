#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geotext/document.hpp"
#include "geotext/model.hpp"

namespace geotext {

/// Source of image-region features: one vector per word and one for the
/// whole page. Implementations are deterministic per key.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> token_feature(const std::string& doc_id, std::size_t word_index) const = 0;
  virtual std::vector<double> page_feature(const std::string& doc_id) const = 0;
};

/// Hash-derived stand-in for a visual feature extractor. Each word vector
/// mixes a component fixed by the word's style flags (identical across
/// documents, zero for unstyled words) with a component hashed from
/// (doc_id, word index, normalized box). The page vector mixes the mean
/// style component with a hash of (doc_id, page size). Every component
/// lies in [-1, 1].
class PseudoFeatureProvider : public FeatureProvider {
 public:
  explicit PseudoFeatureProvider(std::size_t dim);
  void add(const RawDocument& doc);

  std::size_t dim() const override { return dim_; }
  std::vector<double> token_feature(const std::string& doc_id, std::size_t word_index) const override;
  std::vector<double> page_feature(const std::string& doc_id) const override;

 private:
  struct DocInfo {
    int page_w, page_h;
    std::vector<BBox> boxes;
    std::vector<std::uint32_t> styles;
  };
  const DocInfo& doc(const std::string& doc_id) const;
  std::size_t dim_;
  std::map<std::string, DocInfo> docs_;
};

/// Provider for one document (convenience wrapper around PseudoFeatureProvider).
std::unique_ptr<FeatureProvider> pseudo_features(const RawDocument& doc, std::size_t dim);

/// Feature file:
///   magic "GTXFEAT\0", version u32, dim u32, count u64,
///   count x { doc_id (u32 len + bytes), index i64 (-1 = page), n u32, n x f64 },
///   checksum u64 (FNV-1a of everything before it). Little-endian.
inline constexpr std::uint32_t kFeatureFileVersion = 1;
inline constexpr std::int64_t kPageIndex = -1;

struct FeatureRecord {
  std::string doc_id;
  std::int64_t index;  // word index or kPageIndex
  std::vector<double> values;
};

std::string serialize_features(std::size_t dim, std::span<const FeatureRecord> records);
void write_feature_file(const std::filesystem::path& path, std::size_t dim, std::span<const FeatureRecord> records);

/// Serves precomputed vectors. Unknown keys raise DataError naming the key.
class FileFeatureProvider : public FeatureProvider {
 public:
  static FileFeatureProvider from_bytes(std::string_view bytes);
  std::size_t dim() const override { return dim_; }
  std::vector<double> token_feature(const std::string& doc_id, std::size_t word_index) const override;
  std::vector<double> page_feature(const std::string& doc_id) const override;
  std::vector<FeatureRecord> records() const;

 private:
  std::size_t dim_ = 0;
  std::map<std::pair<std::string, std::int64_t>, std::vector<double>> table_;
};

std::unique_ptr<FileFeatureProvider> file_features(const std::filesystem::path& path);

/// Every word and page vector of `docs`, for exporting a provider to a file.
std::vector<FeatureRecord> collect_features(const FeatureProvider& provider, std::span<const RawDocument> docs);

/// Per-token feature rows aligned with an encoded sequence (zero rows for
/// special and padding tokens).
ImageFeatures gather_features(const FeatureProvider& provider, const TokenSequence& s);

}  // namespace geotext
