#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "geotext/dataset.hpp"
#include "geotext/error.hpp"
#include "geotext/finetune.hpp"
#include "geotext/rng.hpp"
#include "geotext/synth.hpp"

namespace geotext::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const auto t = trim(s);
  if (t.empty()) return false;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && p == t.data() + t.size();
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One config key: how to read it from text and how to write it back.
struct Field {
  std::string section, key;
  std::function<std::optional<std::string>(const std::string&, const fs::path&)> set;  // error text on failure
  std::function<std::string()> get;
};

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  auto add_size = [&](const char* s, const char* k, std::size_t& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   if (!parse_number(x, v)) return "expected a non-negative integer, got '" + x + "'";
                   return std::nullopt;
                 },
                 [&v] { return std::to_string(v); }});
  };
  auto add_u64 = [&](const char* s, const char* k, std::uint64_t& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   if (!parse_number(x, v)) return "expected a non-negative integer, got '" + x + "'";
                   return std::nullopt;
                 },
                 [&v] { return std::to_string(v); }});
  };
  auto add_opt_u64 = [&](const char* s, const char* k, std::optional<std::uint64_t>& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   if (trim(x).empty()) {
                     v.reset();
                     return std::nullopt;
                   }
                   std::uint64_t n = 0;
                   if (!parse_number(x, n)) return "expected a non-negative integer or nothing, got '" + x + "'";
                   v = n;
                   return std::nullopt;
                 },
                 [&v] { return v ? std::to_string(*v) : std::string(); }});
  };
  auto add_double = [&](const char* s, const char* k, double& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   if (!parse_number(x, v)) return "expected a number, got '" + x + "'";
                   return std::nullopt;
                 },
                 [&v] { return fmt_double(v); }});
  };
  auto add_opt_double = [&](const char* s, const char* k, std::optional<double>& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   if (trim(x).empty()) {
                     v.reset();
                     return std::nullopt;
                   }
                   double d = 0;
                   if (!parse_number(x, d)) return "expected a number or nothing, got '" + x + "'";
                   v = d;
                   return std::nullopt;
                 },
                 [&v] { return v ? fmt_double(*v) : std::string(); }});
  };
  auto add_bool = [&](const char* s, const char* k, bool& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   const auto t = trim(x);
                   if (t == "true" || t == "yes" || t == "1") v = true;
                   else if (t == "false" || t == "no" || t == "0") v = false;
                   else return "expected true or false, got '" + x + "'";
                   return std::nullopt;
                 },
                 [&v] { return std::string(v ? "true" : "false"); }});
  };
  auto add_string = [&](const char* s, const char* k, std::string& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   v = trim(x);
                   return std::nullopt;
                 },
                 [&v] { return v; }});
  };
  auto add_path = [&](const char* s, const char* k, std::string& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path& base) -> std::optional<std::string> {
                   const auto t = trim(x);
                   v = t.empty() ? std::string() : (base / t).lexically_normal().string();
                   return std::nullopt;
                 },
                 [&v] { return v; }});
  };
  auto add_list = [&](const char* s, const char* k, std::vector<std::string>& v) {
    f.push_back({s, k, [&v](const std::string& x, const fs::path&) -> std::optional<std::string> {
                   v = split_list(x);
                   return std::nullopt;
                 },
                 [&v] {
                   std::string out;
                   for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
                   return out;
                 }});
  };

  add_u64("run", "seed", c.seed);
  add_path("run", "output_dir", c.output_dir);

  add_size("model", "layers", c.model.layers);
  add_size("model", "hidden", c.model.hidden);
  add_size("model", "heads", c.model.heads);
  add_size("model", "ffn_dim", c.model.ffn_dim);
  add_size("model", "max_len", c.model.max_len);
  add_size("model", "vocab_size", c.model.vocab_size);
  add_size("model", "img_feat_dim", c.model.img_feat_dim);
  add_bool("model", "use_layout", c.model.use_layout);
  add_bool("model", "use_image", c.model.use_image);

  add_double("optimizer", "lr", c.optimizer.initial_lr);
  add_double("optimizer", "beta1", c.optimizer.beta1);
  add_double("optimizer", "beta2", c.optimizer.beta2);
  add_double("optimizer", "eps", c.optimizer.eps);

  add_double("masking", "select_rate", c.masking.select_rate);
  add_double("masking", "p_mask", c.masking.p_mask);
  add_double("masking", "p_random", c.masking.p_random);
  add_double("masking", "p_keep", c.masking.p_keep);

  add_path("data", "vocab", c.data.vocab);
  add_path("data", "features", c.data.features);

  add_string("synth", "kind", c.synth.kind);
  f.push_back({"synth", "splits",
               [&c](const std::string& x, const fs::path&) -> std::optional<std::string> {
                 std::map<std::string, std::size_t> m;
                 for (const auto& item : split_list(x)) {
                   const auto colon = item.find(':');
                   std::size_t n = 0;
                   if (colon == std::string::npos || colon == 0 || !parse_number(item.substr(colon + 1), n)) {
                     return "expected name:count pairs, got '" + item + "'";
                   }
                   if (!m.emplace(trim(item.substr(0, colon)), n).second) return "split '" + item + "' given twice";
                 }
                 c.synth.splits = std::move(m);
                 return std::nullopt;
               },
               [&c] {
                 std::string out;
                 for (const auto& [k, n] : c.synth.splits) out += (out.empty() ? "" : ",") + k + ":" + std::to_string(n);
                 return out;
               }});
  add_size("synth", "n_pairs", c.synth.n_pairs);
  add_double("synth", "below_rate", c.synth.below_rate);
  add_double("synth", "label_noise", c.synth.label_noise);
  add_double("synth", "style_rate", c.synth.style_rate);
  add_double("synth", "form_fraction", c.synth.form_fraction);

  add_u64("pretrain", "steps", c.pretrain.steps);
  add_opt_u64("pretrain", "stop_after", c.pretrain.stop_after);
  add_size("pretrain", "batch_size", c.pretrain.batch_size);
  add_bool("pretrain", "mvlm", c.pretrain.mvlm);
  add_bool("pretrain", "mdc", c.pretrain.mdc);
  add_path("pretrain", "corpus", c.pretrain.corpus);
  add_string("pretrain", "corpus_format", c.pretrain.corpus_format);
  add_size("pretrain", "corpus_docs", c.pretrain.corpus_docs);
  add_size("pretrain", "heldout_docs", c.pretrain.heldout_docs);
  add_path("pretrain", "resume", c.pretrain.resume);

  add_string("finetune", "task", c.finetune.task);
  add_path("finetune", "train", c.finetune.train);
  add_path("finetune", "dev", c.finetune.dev);
  add_string("finetune", "format", c.finetune.format);
  add_list("finetune", "labels", c.finetune.labels);
  add_size("finetune", "epochs", c.finetune.epochs);
  add_size("finetune", "batch_size", c.finetune.batch_size);
  add_opt_double("finetune", "stop_at", c.finetune.stop_at);
  add_path("finetune", "init", c.finetune.init);

  add_path("eval", "checkpoint", c.eval.checkpoint);
  add_path("eval", "data", c.eval.data);
  return f;
}

Field* find_field(std::vector<Field>& fs_, const std::string& section, const std::string& key) {
  for (auto& f : fs_) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

[[noreturn]] void report(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw ConfigError(msg);
}

}  // namespace

std::string RunConfig::to_text() const {
  RunConfig copy = *this;
  std::string out, section;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      out += (out.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const { return hash_string(to_text()); }

std::string RunConfig::format_name() const {
  if (!finetune.format.empty()) return finetune.format;
  switch (parse_task(finetune.task)) {
    case Task::SeqLabel: return "funsd_like";
    case Task::Slots: return "slots_like";
    case Task::DocClass: return "classes_like";
  }
  return {};
}

std::vector<std::string> RunConfig::label_names() const {
  if (!finetune.labels.empty()) return finetune.labels;
  const DatasetSchema schema;
  switch (parse_task(finetune.task)) {
    case Task::SeqLabel: return schema.entity_labels;
    case Task::Slots: return schema.slot_keys;
    case Task::DocClass: return schema.class_names;
  }
  return {};
}

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides,
                           const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig c;
  auto table = fields(c);
  std::vector<std::string> problems;
  for (const auto& [section, body] : tree) {
    if (section == "manifest") continue;
    if (body.empty()) {
      if (body.data().empty()) continue;  // an empty [section]
      problems.push_back("'" + section + "' must be inside a [section]");
      continue;
    }
    for (const auto& [key, value] : body) {
      Field* f = find_field(table, section, key);
      if (!f) {
        problems.push_back("unknown key " + section + "." + key);
        continue;
      }
      if (auto err = f->set(value.data(), base_dir)) problems.push_back(section + "." + key + ": " + *err);
    }
  }
  const fs::path cwd = fs::current_path();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      problems.push_back("override '" + o + "' is not section.key=value");
      continue;
    }
    Field* f = find_field(table, trim(o.substr(0, dot)), trim(o.substr(dot + 1, eq - dot - 1)));
    if (!f) {
      problems.push_back("override '" + o + "' names an unknown key");
      continue;
    }
    if (auto err = f->set(o.substr(eq + 1), cwd)) problems.push_back("override " + o + ": " + *err);
  }
  if (!problems.empty()) report(problems);
  return c;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides, fs::absolute(path).parent_path());
}

std::vector<std::string> validate_for(const RunConfig& c, const std::string& command) {
  std::vector<std::string> v;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  auto need_file = [&](const std::string& path, const std::string& key, bool required) {
    if (path.empty()) {
      need(!required, key + " is required");
      return;
    }
    need(fs::exists(path), key + ": " + path + " does not exist");
  };
  auto absorb = [&](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      std::string msg = e.what();
      std::size_t pos = 0;
      while ((pos = msg.find("\n  - ")) != std::string::npos) msg.replace(pos, 5, "; ");
      v.push_back(msg);
    }
  };

  absorb([&] {
    ModelConfig m = c.model;
    m.tagset = {"O"};
    m.validate();
  });
  absorb([&] {
    OptimizerConfig o = c.optimizer;
    o.total_steps = 1;
    o.validate();
  });
  absorb([&] { c.masking.validate(); });
  if (command != "validate-config") need(!c.output_dir.empty(), "run.output_dir is required");

  if (command == "synth") {
    const std::set<std::string> kinds{"forms", "receipts", "classdocs", "pretrain"};
    need(kinds.contains(c.synth.kind), "synth.kind must be forms, receipts, classdocs or pretrain");
    need(!c.synth.splits.empty(), "synth.splits must name at least one split");
    for (const auto& [name, n] : c.synth.splits) need(n >= 1, "synth.splits: split '" + name + "' is empty");
    need(c.synth.form_fraction >= 0 && c.synth.form_fraction <= 1, "synth.form_fraction must lie in [0,1]");
    absorb([&] {
      synth::FormSpec s;
      s.n_pairs = c.synth.n_pairs;
      s.below_rate = c.synth.below_rate;
      s.label_noise = c.synth.label_noise;
      s.style_rate = c.synth.style_rate;
      s.validate();
    });
  } else if (command == "pretrain") {
    need(c.pretrain.batch_size >= 1, "pretrain.batch_size must be >= 1");
    need(c.pretrain.mvlm || c.pretrain.mdc, "pretrain: enable at least one of mvlm, mdc");
    need(!c.model.use_image, "model.use_image: pretraining uses text and layout only");
    need_file(c.pretrain.corpus, "pretrain.corpus", false);
    need_file(c.pretrain.resume, "pretrain.resume", false);
    need_file(c.data.vocab, "data.vocab", false);
    if (c.pretrain.corpus.empty()) need(c.pretrain.corpus_docs >= 1, "pretrain.corpus_docs must be >= 1");
    absorb([&] { (void)parse_dataset_format(c.pretrain.corpus_format); });
  } else if (command == "finetune" || command == "eval") {
    bool task_ok = true;
    absorb([&] {
      try {
        (void)parse_task(c.finetune.task);
      } catch (...) {
        task_ok = false;
        throw;
      }
    });
    if (task_ok) {
      absorb([&] {
        const auto f = parse_dataset_format(c.format_name());
        const Task t = parse_task(c.finetune.task);
        const bool agree = (t == Task::SeqLabel && f == DatasetFormat::FunsdLike) ||
                           (t == Task::Slots && f == DatasetFormat::SlotsLike) ||
                           (t == Task::DocClass && f == DatasetFormat::ClassesLike);
        if (!agree) {
          throw ConfigError("finetune.format " + c.format_name() + " cannot supervise task " + c.finetune.task);
        }
      });
      need(!c.label_names().empty(), "finetune.labels must not be empty");
    }
    need_file(c.data.features, "data.features", false);
    if (command == "finetune") {
      need_file(c.finetune.train, "finetune.train", true);
      need_file(c.finetune.dev, "finetune.dev", true);
      need_file(c.finetune.init, "finetune.init", false);
      need_file(c.data.vocab, "data.vocab", false);
      need(c.finetune.epochs >= 1, "finetune.epochs must be >= 1");
      need(c.finetune.batch_size >= 1, "finetune.batch_size must be >= 1");
    } else {
      need_file(c.eval.checkpoint, "eval.checkpoint", true);
      need_file(c.eval.data, "eval.data", true);
      if (c.data.vocab.empty() && !c.eval.checkpoint.empty()) {
        need_file((fs::path(c.eval.checkpoint).parent_path() / "vocab.txt").string(), "vocab.txt beside eval.checkpoint",
                  true);
      } else {
        need_file(c.data.vocab, "data.vocab", false);
      }
    }
  } else if (command != "validate-config") {
    v.push_back("unknown command " + command);
  }
  return v;
}

}  // namespace geotext::cli
