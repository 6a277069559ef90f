#include "config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>

#include "softcl/errors.hpp"
#include "softcl/rng.hpp"
#include "softcl/text.hpp"

namespace softcl::cli {

namespace {

std::uint64_t to_u64(const std::string& key, std::string_view text) {
  text = trim(text);
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || end != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double to_double(const std::string& key, std::string_view text) {
  double v = 0.0;
  if (!parse_double(text, v)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

bool to_bool(const std::string& key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + std::string(text) + "'");
}

std::pair<Language, Language> parse_pair(const std::string& key, std::string_view pair) {
  const std::size_t dash = pair.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == pair.size()) {
    throw ConfigError("config key '" + key + "': language pair must look like 'en-ko'");
  }
  return {std::string(pair.substr(0, dash)), std::string(pair.substr(dash + 1))};
}

std::filesystem::path existing_path(const std::string& key, const std::string& value,
                                    const std::filesystem::path& base_dir) {
  std::filesystem::path p(value);
  if (p.is_relative()) p = base_dir / p;
  if (!std::filesystem::exists(p)) {
    throw ConfigError("config key '" + key + "': path does not exist: " + p.string());
  }
  return p;
}

TeacherSpec parse_teacher(const std::string& value, const std::filesystem::path& base_dir) {
  TeacherSpec spec;
  constexpr std::string_view kSynthetic = "synthetic:";
  if (value.rfind(kSynthetic, 0) == 0) {
    // synthetic:<seed>:<dim>:<lang,lang,...>
    const auto fields = split_fields(std::string_view(value).substr(kSynthetic.size()), ':');
    if (fields.size() != 3) {
      throw ConfigError("config key 'teacher': expected synthetic:<seed>:<dim>:<lang,...>");
    }
    spec.seed = to_u64("teacher", fields[0]);
    spec.dim = static_cast<std::size_t>(to_u64("teacher", fields[1]));
    spec.languages = LanguagePriority::parse(fields[2]).order();
    if (spec.dim == 0) throw ConfigError("config key 'teacher': dimension must be positive");
    return spec;
  }
  spec.table = existing_path("teacher", value, base_dir);
  return spec;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",        "out",          "max_epochs",   "global_batch", "shards",     "lr0",
      "beta1",       "beta2",        "eps",          "weight_decay", "patience",   "temperature",
      "lambda",      "label_mode",   "tcm",          "objective",    "priority",   "student_dim",
      "min_count",   "teacher",      "sample_total", "sample_train", "test_sentences", "sts",
      "eval_k",      "eval_margin"};
  return keys;
}

}  // namespace

std::string RunConfig::hash_hex() const {
  std::string canonical;
  for (const auto& [k, v] : entries) {
    if (k == "out") continue;
    canonical += k;
    canonical += '=';
    canonical += v;
    canonical += '\n';
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config file " + path.string());
  }
  std::map<std::string, std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    const std::size_t eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(l.substr(0, eq)));
    if (key.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": empty key");
    }
    entries[key] = std::string(trim(l.substr(eq + 1)));
  }
  return entries;
}

RunConfig build_run_config(const std::map<std::string, std::string>& entries, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.entries = entries;
  auto& t = cfg.trainer;
  for (const auto& [key, value] : entries) {
    if (key.rfind("corpus.", 0) == 0) {
      const auto [s, g] = parse_pair(key, std::string_view(key).substr(7));
      cfg.corpora.push_back({s, g, existing_path(key, value, base_dir)});
      continue;
    }
    if (key.rfind("valid.", 0) == 0) {
      if (cfg.valid) throw ConfigError("only one valid.<src>-<tgt> corpus may be configured");
      const auto [s, g] = parse_pair(key, std::string_view(key).substr(6));
      cfg.valid = CorpusEntry{s, g, existing_path(key, value, base_dir)};
      continue;
    }
    if (!known_keys().contains(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    if (key == "seed") t.seed = to_u64(key, value);
    else if (key == "out") cfg.out = value;
    else if (key == "max_epochs") t.max_epochs = to_u64(key, value);
    else if (key == "global_batch") t.global_batch = to_u64(key, value);
    else if (key == "shards") t.shards = to_u64(key, value);
    else if (key == "lr0") t.lr0 = to_double(key, value);
    else if (key == "beta1") t.adamw.beta1 = to_double(key, value);
    else if (key == "beta2") t.adamw.beta2 = to_double(key, value);
    else if (key == "eps") t.adamw.eps = to_double(key, value);
    else if (key == "weight_decay") t.adamw.weight_decay = to_double(key, value);
    else if (key == "patience") t.patience = to_u64(key, value);
    else if (key == "temperature") t.loss.temperature = to_double(key, value);
    else if (key == "lambda") t.loss.lambda = to_double(key, value);
    else if (key == "label_mode") t.loss.mode = parse_label_mode(value);
    else if (key == "tcm") t.loss.tcm = to_bool(key, value);
    else if (key == "objective") t.objective = parse_objective(value);
    else if (key == "priority") t.priority = LanguagePriority::parse(value);
    else if (key == "student_dim") cfg.student_dim = to_u64(key, value);
    else if (key == "min_count") cfg.min_count = to_u64(key, value);
    else if (key == "teacher") cfg.teacher = parse_teacher(value, base_dir);
    else if (key == "sample_total") cfg.sample_total = to_u64(key, value);
    else if (key == "sample_train") cfg.sample_train = to_u64(key, value);
    else if (key == "test_sentences") cfg.test_sentences = existing_path(key, value, base_dir);
    else if (key == "sts") cfg.sts = existing_path(key, value, base_dir);
    else if (key == "eval_k") cfg.eval_k = to_u64(key, value);
    else if (key == "eval_margin") cfg.eval_margin = parse_margin_scoring(value);
  }
  if (cfg.out.is_relative()) cfg.out = base_dir / cfg.out;

  t.validate();
  if (cfg.student_dim < 2) throw ConfigError("student_dim must be at least 2");
  if (cfg.min_count < 1) throw ConfigError("min_count must be at least 1");
  if (cfg.corpora.empty()) throw ConfigError("no training corpus configured (corpus.<src>-<tgt> = PATH)");
  if (cfg.sample_total.has_value() != cfg.sample_train.has_value()) {
    throw ConfigError("sample_total and sample_train must be given together");
  }
  if (!cfg.valid && !cfg.sample_total) {
    throw ConfigError("no validation data: set valid.<src>-<tgt> or sample_total/sample_train");
  }
  if (!cfg.teacher) {
    throw ConfigError("no teacher configured (teacher = PATH or synthetic:<seed>:<dim>:<langs>)");
  }
  return cfg;
}

TeacherOracle load_teacher(const TeacherSpec& spec) {
  if (spec.table) {
    return TeacherOracle::load(*spec.table);
  }
  return TeacherOracle::synthetic(spec.seed, spec.dim, spec.languages);
}

}  // namespace softcl::cli
