#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "softcl/labels.hpp"
#include "softcl/model.hpp"

namespace softcl {

using SentencePair = std::pair<std::string, std::string>;

/// Aligned translation pairs (s_i, t_i) for one language pair.
struct ParallelCorpus {
  Language src_lang;
  Language tgt_lang;
  std::vector<SentencePair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
  std::vector<std::string> sources() const;
  std::vector<std::string> targets() const;

  /// Languages differ and no side is blank.
  void validate() const;
  std::string pair_name() const { return src_lang + "-" + tgt_lang; }
};

struct StsRecord {
  std::string sentence_a;
  std::string sentence_b;
  double gold = 0.0;  // [0, 5]
};

struct CorpusLoad {
  ParallelCorpus corpus;
  std::size_t lines = 0;      // nonempty lines seen
  std::size_t malformed = 0;  // skipped lines
};

/// Reads `src <TAB> tgt` lines. Malformed lines are skipped and counted;
/// more than 10% malformed is a DataError.
CorpusLoad load_tsv(const std::filesystem::path& path, Language src_lang, Language tgt_lang);

void write_tsv(std::ostream& out, const ParallelCorpus& corpus);

/// Reads `sentence_a <TAB> sentence_b <TAB> score` with score in [0, 5].
std::vector<StsRecord> load_sts(const std::filesystem::path& path);

/// Reads `i <TAB> j` lines into gold[i] = j. Must describe a permutation of [0, n).
std::vector<std::size_t> load_gold(const std::filesystem::path& path, std::size_t n);

void write_gold(std::ostream& out, std::span<const std::size_t> gold);

struct CorpusSplit {
  ParallelCorpus train;
  ParallelCorpus valid;
};

/// Draws n_total pairs uniformly without replacement (seeded), first n_train
/// become train, the rest valid.
CorpusSplit sample_split(const ParallelCorpus& corpus, std::size_t n_total, std::size_t n_train,
                         std::uint64_t seed);

struct OverlapFilterResult {
  ParallelCorpus corpus;
  std::size_t removed = 0;
};

/// Drops every pair whose source or target matches a test sentence after
/// normalize_for_matching on both sides.
OverlapFilterResult filter_overlap(const ParallelCorpus& train, const std::set<std::string>& test_sentences);

/// Tokens seen at least min_count times across both sides of all corpora,
/// ordered by descending count then lexicographically, after the unknown token.
Vocab build_vocab(std::span<const ParallelCorpus> corpora, std::size_t min_count);

struct SyntheticSpec {
  std::size_t concepts = 20;
  std::size_t pairs = 600;
  std::size_t vocab_per_language = 4;  // words per concept block
  double noise = 0.05;
  std::size_t teacher_dim = 16;
  std::uint64_t seed = 7;
  Language src_lang = "en";
  Language tgt_lang = "ko";

  void validate() const;
};

struct SyntheticData {
  ParallelCorpus corpus;
  std::vector<TeacherRecord> teacher;      // both languages, one record per distinct sentence
  std::vector<std::size_t> gold;           // identity
  std::vector<std::vector<double>> concept_vectors;
  std::vector<std::size_t> concept_of;     // per pair
};

/// Desk-scale bilingual corpus with a known semantic structure.
///
/// Each concept owns a block of `vocab_per_language` words per language;
/// word k of a block in one language translates word k in the other. A pair
/// draws 3-8 word indices from its concept block, the target side uses the
/// same words in shuffled order. Teacher embedding of a sentence is
/// normalize(concept + noise * u), where u is the sum of the sentence's
/// per-word perturbation vectors (unit variance per dimension). Word perturbations
/// are shared across languages up to a language-specific jitter, so
/// translations get close but not identical teacher embeddings.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace softcl
