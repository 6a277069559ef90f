#include "softcl/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <unordered_set>

#include "softcl/errors.hpp"
#include "softcl/rng.hpp"
#include "softcl/text.hpp"

namespace softcl {

std::vector<std::string> ParallelCorpus::sources() const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.first);
  return out;
}

std::vector<std::string> ParallelCorpus::targets() const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.second);
  return out;
}

void ParallelCorpus::validate() const {
  if (src_lang.empty() || tgt_lang.empty() || src_lang == tgt_lang) {
    throw ConfigError("corpus languages must be distinct and nonempty, got '" + src_lang + "' and '" +
                      tgt_lang + "'");
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (trim(pairs[i].first).empty() || trim(pairs[i].second).empty()) {
      throw DataError(pair_name() + " pair " + std::to_string(i) + " has an empty side");
    }
  }
}

CorpusLoad load_tsv(const std::filesystem::path& path, Language src_lang, Language tgt_lang) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open corpus " + path.string());
  }
  CorpusLoad out;
  out.corpus.src_lang = std::move(src_lang);
  out.corpus.tgt_lang = std::move(tgt_lang);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++out.lines;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 2 || trim(fields[0]).empty() || trim(fields[1]).empty()) {
      ++out.malformed;
      continue;
    }
    out.corpus.pairs.emplace_back(std::string(fields[0]), std::string(fields[1]));
  }
  if (out.lines == 0) {
    spdlog::warn("corpus {} is empty", path.string());
  } else if (out.malformed > 0) {
    spdlog::warn("corpus {}: skipped {} malformed line(s) of {}", path.string(), out.malformed, out.lines);
  }
  if (out.malformed * 10 > out.lines) {
    throw DataError("corpus " + path.string() + ": " + std::to_string(out.malformed) + " of " +
                    std::to_string(out.lines) + " lines are malformed (limit 10%)");
  }
  out.corpus.validate();
  return out;
}

void write_tsv(std::ostream& out, const ParallelCorpus& corpus) {
  for (const auto& [s, t] : corpus.pairs) {
    out << s << '\t' << t << '\n';
  }
}

std::vector<StsRecord> load_sts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open STS file " + path.string());
  }
  std::vector<StsRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3) {
      throw DataError(where + ": expected sentence_a <TAB> sentence_b <TAB> score");
    }
    StsRecord rec{std::string(fields[0]), std::string(fields[1]), 0.0};
    if (!parse_double(fields[2], rec.gold) || rec.gold < 0.0 || rec.gold > 5.0) {
      throw DataError(where + ": score '" + std::string(fields[2]) + "' is not a number in [0, 5]");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<std::size_t> load_gold(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open gold alignment " + path.string());
  }
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> gold(n, kUnset);
  std::vector<bool> used(n, false);
  std::string line;
  std::size_t line_no = 0;
  auto parse_index = [&](std::string_view text, std::size_t& out) {
    text = trim(text);
    if (text.empty() || text.find_first_not_of("0123456789") != std::string_view::npos) return false;
    out = std::stoull(std::string(text));
    return true;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::size_t i = 0;
    std::size_t j = 0;
    if (fields.size() != 2 || !parse_index(fields[0], i) || !parse_index(fields[1], j)) {
      throw DataError(where + ": expected 'i <TAB> j'");
    }
    if (i >= n || j >= n) {
      throw ShapeError(where + ": index out of range for " + std::to_string(n) + " pairs");
    }
    if (gold[i] != kUnset || used[j]) {
      throw ShapeError(where + ": alignment is not a permutation (repeated index)");
    }
    gold[i] = j;
    used[j] = true;
  }
  if (std::find(gold.begin(), gold.end(), kUnset) != gold.end()) {
    throw ShapeError(path.string() + ": alignment does not cover all " + std::to_string(n) + " pairs");
  }
  return gold;
}

void write_gold(std::ostream& out, std::span<const std::size_t> gold) {
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out << i << '\t' << gold[i] << '\n';
  }
}

CorpusSplit sample_split(const ParallelCorpus& corpus, std::size_t n_total, std::size_t n_train,
                         std::uint64_t seed) {
  if (n_train > n_total) {
    throw ConfigError("sample_split: n_train (" + std::to_string(n_train) + ") exceeds n_total (" +
                      std::to_string(n_total) + ")");
  }
  if (n_total > corpus.size()) {
    throw ConfigError("sample_split: n_total (" + std::to_string(n_total) + ") exceeds corpus size (" +
                      std::to_string(corpus.size()) + ")");
  }
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  // Partial Fisher-Yates: positions [0, n_total) hold a uniform sample in draw order.
  for (std::size_t i = 0; i < n_total; ++i) {
    const std::size_t j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  CorpusSplit out{{corpus.src_lang, corpus.tgt_lang, {}}, {corpus.src_lang, corpus.tgt_lang, {}}};
  out.train.pairs.reserve(n_train);
  out.valid.pairs.reserve(n_total - n_train);
  for (std::size_t i = 0; i < n_total; ++i) {
    (i < n_train ? out.train : out.valid).pairs.push_back(corpus.pairs[idx[i]]);
  }
  return out;
}

OverlapFilterResult filter_overlap(const ParallelCorpus& train, const std::set<std::string>& test_sentences) {
  std::unordered_set<std::string> keys;
  for (const auto& s : test_sentences) keys.insert(normalize_for_matching(s));
  OverlapFilterResult out{{train.src_lang, train.tgt_lang, {}}, 0};
  for (const auto& pair : train.pairs) {
    if (keys.contains(normalize_for_matching(pair.first)) || keys.contains(normalize_for_matching(pair.second))) {
      ++out.removed;
      continue;
    }
    out.corpus.pairs.push_back(pair);
  }
  return out;
}

Vocab build_vocab(std::span<const ParallelCorpus> corpora, std::size_t min_count) {
  if (min_count == 0) {
    throw ConfigError("build_vocab: min_count must be at least 1");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& corpus : corpora) {
    for (const auto& [s, t] : corpus.pairs) {
      for (auto& tok : tokenize(s)) ++counts[std::move(tok)];
      for (auto& tok : tokenize(t)) ++counts[std::move(tok)];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && tok != Vocab::kUnknownToken) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab vocab;
  for (const auto& [tok, _] : kept) vocab.add(tok);
  return vocab;
}

void SyntheticSpec::validate() const {
  if (concepts < 2) throw ConfigError("synthetic data: need at least 2 concepts");
  if (pairs < concepts) {
    throw ConfigError("synthetic data: pairs (" + std::to_string(pairs) + ") must be at least concepts (" +
                      std::to_string(concepts) + ")");
  }
  if (vocab_per_language < 1) throw ConfigError("synthetic data: vocab per language must be positive");
  if (teacher_dim < 2) throw ConfigError("synthetic data: teacher dimension must be at least 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("synthetic data: noise must be nonnegative");
  if (src_lang.empty() || tgt_lang.empty() || src_lang == tgt_lang) {
    throw ConfigError("synthetic data: languages must be distinct");
  }
}

namespace {

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

std::string word_token(const Language& lang, std::size_t concept_id, std::size_t word) {
  return lang + std::to_string(concept_id) + "w" + std::to_string(word);
}

constexpr double kLanguageJitter = 0.5;
constexpr std::size_t kMinLength = 3;
constexpr std::size_t kMaxLength = 8;

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t dt = spec.teacher_dim;
  const std::size_t v = spec.vocab_per_language;

  SyntheticData out;
  out.corpus.src_lang = spec.src_lang;
  out.corpus.tgt_lang = spec.tgt_lang;

  for (std::size_t c = 0; c < spec.concepts; ++c) {
    auto vec = gaussian_vector(rng, dt);
    const double n = l2_norm(vec);
    for (double& x : vec) x /= n;
    out.concept_vectors.push_back(std::move(vec));
  }

  // Per-word perturbations: shared meaning plus language jitter, rescaled to unit variance.
  const double mix = 1.0 / std::sqrt(1.0 + kLanguageJitter * kLanguageJitter);
  std::vector<std::vector<double>> src_word(spec.concepts * v);
  std::vector<std::vector<double>> tgt_word(spec.concepts * v);
  for (std::size_t k = 0; k < spec.concepts * v; ++k) {
    const auto shared = gaussian_vector(rng, dt);
    const auto js = gaussian_vector(rng, dt);
    const auto jt = gaussian_vector(rng, dt);
    src_word[k].resize(dt);
    tgt_word[k].resize(dt);
    for (std::size_t a = 0; a < dt; ++a) {
      src_word[k][a] = mix * (shared[a] + kLanguageJitter * js[a]);
      tgt_word[k][a] = mix * (shared[a] + kLanguageJitter * jt[a]);
    }
  }

  auto teacher_vector = [&](std::size_t c, const std::vector<std::size_t>& words,
                            const std::vector<std::vector<double>>& table) {
    std::vector<double> u(dt, 0.0);
    for (std::size_t w : words) {
      for (std::size_t a = 0; a < dt; ++a) u[a] += table[c * v + w][a];
    }
    const double scale = spec.noise;
    std::vector<double> e(dt);
    for (std::size_t a = 0; a < dt; ++a) e[a] = out.concept_vectors[c][a] + scale * u[a];
    const double n = l2_norm(e);
    for (double& x : e) x /= n;
    return e;
  };

  std::unordered_set<std::string> seen_src;
  std::unordered_set<std::string> seen_tgt;
  constexpr int kMaxAttempts = 1000;
  for (std::size_t p = 0; p < spec.pairs; ++p) {
    // Every concept appears at least once; the rest are uniform.
    const std::size_t c = p < spec.concepts ? p : rng.uniform_index(spec.concepts);
    std::vector<std::size_t> words;
    std::vector<std::size_t> tgt_order;
    std::string src;
    std::string tgt;
    int attempts = 0;
    do {
      if (++attempts > kMaxAttempts) {
        throw ConfigError("synthetic data: cannot draw distinct sentences; increase vocab per language");
      }
      const std::size_t len = kMinLength + rng.uniform_index(kMaxLength - kMinLength + 1);
      words.assign(len, 0);
      for (auto& w : words) w = rng.uniform_index(v);
      tgt_order = words;
      rng.shuffle(tgt_order);
      src.clear();
      tgt.clear();
      for (std::size_t k = 0; k < len; ++k) {
        if (k) {
          src += ' ';
          tgt += ' ';
        }
        src += word_token(spec.src_lang, c, words[k]);
        tgt += word_token(spec.tgt_lang, c, tgt_order[k]);
      }
    } while (seen_src.contains(src) || seen_tgt.contains(tgt));
    seen_src.insert(src);
    seen_tgt.insert(tgt);

    out.teacher.push_back({spec.src_lang, src, teacher_vector(c, words, src_word)});
    out.teacher.push_back({spec.tgt_lang, tgt, teacher_vector(c, tgt_order, tgt_word)});
    out.corpus.pairs.emplace_back(std::move(src), std::move(tgt));
    out.concept_of.push_back(c);
    out.gold.push_back(p);
  }
  return out;
}

}  // namespace softcl
