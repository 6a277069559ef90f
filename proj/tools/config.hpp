#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "softcl/eval.hpp"
#include "softcl/trainer.hpp"

namespace softcl::cli {

struct CorpusEntry {
  Language src_lang;
  Language tgt_lang;
  std::filesystem::path path;
};

struct TeacherSpec {
  std::optional<std::filesystem::path> table;  // file-backed
  std::uint64_t seed = 0;                      // synthetic
  std::size_t dim = 0;
  std::vector<Language> languages;
};

/// Everything `train` and `inspect-labels` need. Built from a flat
/// key=value file plus command-line overrides; see README for the keys.
struct RunConfig {
  TrainerConfig trainer;
  std::size_t student_dim = 128;
  std::size_t min_count = 1;
  std::vector<CorpusEntry> corpora;
  std::optional<CorpusEntry> valid;
  std::optional<std::size_t> sample_total;
  std::optional<std::size_t> sample_train;
  std::optional<std::filesystem::path> test_sentences;
  std::optional<std::filesystem::path> sts;
  std::optional<TeacherSpec> teacher;
  std::size_t eval_k = 4;
  MarginScoring eval_margin = MarginScoring::Ratio;
  std::filesystem::path out = "runs";

  // Canonical (sorted, overrides applied) entries; hashed for the run directory.
  std::map<std::string, std::string> entries;

  std::string hash_hex() const;
};

/// Reads `key = value` lines; `#` starts a comment line. Later keys win.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Validates entries and resolves relative paths against `base_dir`.
/// Throws ConfigError on unknown keys, bad values or missing files.
RunConfig build_run_config(const std::map<std::string, std::string>& entries, const std::filesystem::path& base_dir);

TeacherOracle load_teacher(const TeacherSpec& spec);

}  // namespace softcl::cli
