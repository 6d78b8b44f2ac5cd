#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geotext/document.hpp"

namespace geotext {

/// Line-delimited JSON containers, one document per line. Schemas are
/// documented in docs/formats.md.
enum class DatasetFormat { FunsdLike, SlotsLike, ClassesLike };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view dataset_format_name(DatasetFormat f);

struct DatasetSchema {
  std::vector<std::string> entity_labels{"question", "answer", "header", "other"};
  std::vector<std::string> slot_keys{"company", "date", "address", "total"};
  std::vector<std::string> class_names{"one_column", "two_column", "header_block", "scattered"};
};

/// Parses and validates one record. `where` (file:line) prefixes errors.
RawDocument parse_dataset_record(std::string_view line, DatasetFormat format, const DatasetSchema& schema,
                                 const std::string& where);

/// Canonical single-line JSON for a document (no trailing newline).
std::string dataset_record(const RawDocument& doc, DatasetFormat format);

/// Loads `path` (one .jsonl file, or every *.jsonl in a directory in
/// lexicographic path order). An empty directory or file is a DataError;
/// duplicate doc_ids are a DataError.
std::vector<RawDocument> load_labeled_dataset(const std::filesystem::path& path, DatasetFormat format,
                                              const DatasetSchema& schema = {});

void write_dataset(const std::filesystem::path& file, std::span<const RawDocument> docs, DatasetFormat format);

/// First contiguous word run whose texts joined by single spaces equal `value`.
std::optional<std::pair<std::size_t, std::size_t>> find_word_span(const RawDocument& doc, std::string_view value);

/// Slot value rendering: the words of [start, end] joined with single spaces.
std::string join_words(const RawDocument& doc, std::size_t start, std::size_t end);

}  // namespace geotext
