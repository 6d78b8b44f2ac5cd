#include "geotext/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "geotext/checkpoint.hpp"
#include "geotext/error.hpp"

namespace geotext {

using nlohmann::json;

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "funsd_like") return DatasetFormat::FunsdLike;
  if (name == "slots_like") return DatasetFormat::SlotsLike;
  if (name == "classes_like") return DatasetFormat::ClassesLike;
  throw ConfigError("unknown dataset format '" + std::string(name) + "' (expected funsd_like, slots_like or classes_like)");
}

std::string_view dataset_format_name(DatasetFormat f) {
  switch (f) {
    case DatasetFormat::FunsdLike: return "funsd_like";
    case DatasetFormat::SlotsLike: return "slots_like";
    case DatasetFormat::ClassesLike: return "classes_like";
  }
  return "?";
}

std::string join_words(const RawDocument& doc, std::size_t start, std::size_t end) {
  std::string out;
  for (std::size_t i = start; i <= end && i < doc.words.size(); ++i) {
    if (i > start) out += ' ';
    out += doc.words[i].text;
  }
  return out;
}

std::optional<std::pair<std::size_t, std::size_t>> find_word_span(const RawDocument& doc, std::string_view value) {
  for (std::size_t s = 0; s < doc.words.size(); ++s) {
    std::size_t pos = 0;
    for (std::size_t e = s; e < doc.words.size(); ++e) {
      const std::string& t = doc.words[e].text;
      if (e > s) {
        if (pos >= value.size() || value[pos] != ' ') break;
        ++pos;
      }
      if (value.compare(pos, t.size(), t) != 0 || pos + t.size() > value.size()) break;
      pos += t.size();
      if (pos == value.size()) return std::make_pair(s, e);
    }
  }
  return std::nullopt;
}

namespace {

class RecordError {
 public:
  RecordError(std::string where, std::string doc_id) : where_(std::move(where)), doc_id_(std::move(doc_id)) {}
  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw DataError(where_ + ": document '" + doc_id_ + "' field '" + field + "': " + msg);
  }
  void set_doc(std::string id) { doc_id_ = std::move(id); }

 private:
  std::string where_;
  std::string doc_id_;
};

int as_int(const json& v, const RecordError& err, const std::string& field) {
  if (!v.is_number_integer()) err.fail(field, "expected an integer");
  const auto x = v.get<long long>();
  if (x < -1'000'000 || x > 1'000'000) err.fail(field, "integer out of range");
  return static_cast<int>(x);
}

std::uint32_t parse_style(const json& v, const RecordError& err, const std::string& field) {
  if (!v.is_array()) err.fail(field, "expected an array of style names");
  std::uint32_t s = kStyleNone;
  for (const auto& e : v) {
    if (!e.is_string()) err.fail(field, "style names must be strings");
    const auto n = e.get<std::string>();
    if (n == "bold") s |= kStyleBold;
    else if (n == "italic") s |= kStyleItalic;
    else if (n == "underline") s |= kStyleUnderline;
    else err.fail(field, "unknown style '" + n + "'");
  }
  return s;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

RawDocument parse_dataset_record(std::string_view line, DatasetFormat format, const DatasetSchema& schema,
                                 const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": invalid JSON: " + e.what());
  }
  RecordError err(where, "?");
  if (!j.is_object()) err.fail("<record>", "expected a JSON object");

  RawDocument d;
  if (!j.contains("doc_id") || !j["doc_id"].is_string() || j["doc_id"].get<std::string>().empty()) {
    err.fail("doc_id", "missing or not a non-empty string");
  }
  d.doc_id = j["doc_id"].get<std::string>();
  err.set_doc(d.doc_id);

  if (!j.contains("page") || !j["page"].is_array() || j["page"].size() != 2) err.fail("page", "expected [width, height]");
  d.page_width = as_int(j["page"][0], err, "page");
  d.page_height = as_int(j["page"][1], err, "page");
  if (d.page_width <= 0 || d.page_height <= 0) err.fail("page", "dimensions must be positive");

  if (!j.contains("words") || !j["words"].is_array()) err.fail("words", "missing or not an array");
  for (std::size_t i = 0; i < j["words"].size(); ++i) {
    const json& w = j["words"][i];
    const std::string f = "words[" + std::to_string(i) + "]";
    if (!w.is_object()) err.fail(f, "expected an object");
    if (!w.contains("text") || !w["text"].is_string() || w["text"].get<std::string>().empty()) {
      err.fail(f + ".text", "missing or empty");
    }
    if (!w.contains("box") || !w["box"].is_array() || w["box"].size() != 4) err.fail(f + ".box", "expected 4 integers");
    RawWord rw;
    rw.text = w["text"].get<std::string>();
    rw.box = {as_int(w["box"][0], err, f + ".box"), as_int(w["box"][1], err, f + ".box"),
              as_int(w["box"][2], err, f + ".box"), as_int(w["box"][3], err, f + ".box")};
    if (rw.box.x0 > rw.box.x1 || rw.box.y0 > rw.box.y1) err.fail(f + ".box", "corners out of order");
    if (clip_to_page(rw.box, d.page_width, d.page_height)) ++d.clipped_boxes;
    if (w.contains("style")) rw.style = parse_style(w["style"], err, f + ".style");
    d.words.push_back(std::move(rw));
  }

  if (j.contains("tags")) {
    if (!j["tags"].is_array()) err.fail("tags", "expected an array of 0/1");
    std::vector<bool> tags;
    for (const auto& t : j["tags"]) {
      if (!t.is_number_integer() || (t.get<int>() != 0 && t.get<int>() != 1)) err.fail("tags", "entries must be 0 or 1");
      tags.push_back(t.get<int>() == 1);
    }
    d.tags = std::move(tags);
  }

  switch (format) {
    case DatasetFormat::FunsdLike: {
      if (!j.contains("entities") || !j["entities"].is_array()) err.fail("entities", "missing or not an array");
      for (std::size_t i = 0; i < j["entities"].size(); ++i) {
        const json& e = j["entities"][i];
        const std::string f = "entities[" + std::to_string(i) + "]";
        if (!e.is_object() || !e.contains("start") || !e.contains("end") || !e.contains("label")) {
          err.fail(f, "expected {start, end, label}");
        }
        const int s = as_int(e["start"], err, f + ".start");
        const int en = as_int(e["end"], err, f + ".end");
        if (!e["label"].is_string()) err.fail(f + ".label", "expected a string");
        const std::string label = e["label"].get<std::string>();
        if (s < 0 || en < s || static_cast<std::size_t>(en) >= d.words.size()) {
          err.fail(f, "span [" + std::to_string(s) + ", " + std::to_string(en) + "] out of range for " +
                          std::to_string(d.words.size()) + " words");
        }
        if (!contains(schema.entity_labels, label)) err.fail(f + ".label", "unknown entity label '" + label + "'");
        d.entities.push_back(Entity{static_cast<std::size_t>(s), static_cast<std::size_t>(en), label});
      }
      std::vector<Entity> sorted = d.entities;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].start <= sorted[i - 1].end) err.fail("entities", "spans overlap");
      }
      break;
    }
    case DatasetFormat::SlotsLike: {
      if (!j.contains("slots") || !j["slots"].is_object()) err.fail("slots", "missing or not an object");
      for (const auto& [key, value] : j["slots"].items()) {
        if (!contains(schema.slot_keys, key)) err.fail("slots." + key, "unknown slot key");
        if (!value.is_string() || value.get<std::string>().empty()) err.fail("slots." + key, "expected a non-empty string");
        if (!find_word_span(d, value.get<std::string>())) err.fail("slots." + key, "value does not occur in the word sequence");
        d.slots[key] = value.get<std::string>();
      }
      break;
    }
    case DatasetFormat::ClassesLike: {
      if (!j.contains("label") || !j["label"].is_string()) err.fail("label", "missing or not a string");
      const std::string label = j["label"].get<std::string>();
      if (!contains(schema.class_names, label)) err.fail("label", "unknown class '" + label + "'");
      d.class_label = label;
      break;
    }
  }
  return d;
}

std::string dataset_record(const RawDocument& doc, DatasetFormat format) {
  json j;
  j["doc_id"] = doc.doc_id;
  j["page"] = {doc.page_width, doc.page_height};
  json words = json::array();
  for (const auto& w : doc.words) {
    json jw;
    jw["text"] = w.text;
    jw["box"] = {w.box.x0, w.box.y0, w.box.x1, w.box.y1};
    if (w.style != kStyleNone) {
      json st = json::array();
      if (w.style & kStyleBold) st.push_back("bold");
      if (w.style & kStyleItalic) st.push_back("italic");
      if (w.style & kStyleUnderline) st.push_back("underline");
      jw["style"] = st;
    }
    words.push_back(std::move(jw));
  }
  j["words"] = std::move(words);
  if (doc.tags) {
    json t = json::array();
    for (bool b : *doc.tags) t.push_back(b ? 1 : 0);
    j["tags"] = std::move(t);
  }
  switch (format) {
    case DatasetFormat::FunsdLike: {
      json es = json::array();
      for (const auto& e : doc.entities) es.push_back({{"start", e.start}, {"end", e.end}, {"label", e.label}});
      j["entities"] = std::move(es);
      break;
    }
    case DatasetFormat::SlotsLike: {
      json s = json::object();
      for (const auto& [k, v] : doc.slots) s[k] = v;
      j["slots"] = std::move(s);
      break;
    }
    case DatasetFormat::ClassesLike:
      require(doc.class_label.has_value(), "dataset_record: classes_like document without a class label");
      j["label"] = *doc.class_label;
      break;
  }
  return j.dump();
}

std::vector<RawDocument> load_labeled_dataset(const std::filesystem::path& path, DatasetFormat format,
                                              const DatasetSchema& schema) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("dataset directory " + path.string() + " contains no .jsonl files");
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw DataError("dataset path " + path.string() + " does not exist");
  }

  std::vector<RawDocument> docs;
  std::set<std::string> seen;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw DataError("cannot open " + f.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      RawDocument d = parse_dataset_record(line, format, schema, f.string() + ":" + std::to_string(lineno));
      if (!seen.insert(d.doc_id).second) throw DataError(f.string() + ":" + std::to_string(lineno) + ": duplicate doc_id '" + d.doc_id + "'");
      docs.push_back(std::move(d));
    }
  }
  if (docs.empty()) throw DataError("dataset " + path.string() + " contains no documents");
  return docs;
}

void write_dataset(const std::filesystem::path& file, std::span<const RawDocument> docs, DatasetFormat format) {
  std::string out;
  for (const auto& d : docs) {
    out += dataset_record(d, format);
    out += '\n';
  }
  write_file_atomic(file, out);
}

}  // namespace geotext
