#include "softcl/model.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "softcl/errors.hpp"
#include "softcl/text.hpp"

namespace softcl {

Vocab::Vocab() {
  tokens_.emplace_back(kUnknownToken);
  ids_.emplace(std::string(kUnknownToken), kUnknown);
}

TokenId Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) {
    return it->second;
  }
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnknown : it->second;
}

TokenSeq Vocab::encode(std::string_view sentence) const {
  TokenSeq ids;
  for (const auto& tok : tokenize(sentence)) {
    ids.push_back(id(tok));
  }
  return ids;
}

StudentEncoder StudentEncoder::initialize(Vocab vocab, std::size_t dim, Rng& rng, double stddev) {
  if (dim < 2) {
    throw ConfigError("student dimension must be at least 2");
  }
  StudentEncoder enc{std::move(vocab), Matrix(0, 0), Matrix(dim, dim)};
  enc.token_table = Matrix(enc.vocab.size(), dim);
  for (double& v : enc.token_table.values()) v = stddev * rng.normal();
  for (double& v : enc.projection.values()) v = stddev * rng.normal();
  return enc;
}

void StudentEncoder::validate() const {
  if (dim() < 2 || projection.cols() != dim()) {
    throw ShapeError("student projection must be d x d with d >= 2");
  }
  if (token_table.rows() != vocab.size() || token_table.cols() != dim()) {
    throw ShapeError("student token table must be V x d");
  }
  if (!token_table.all_finite() || !projection.all_finite()) {
    throw NumericalError("student parameters contain non-finite values");
  }
}

namespace {

void encode_into(const StudentEncoder& enc, std::span<const TokenId> sentence, std::span<double> out,
                 std::vector<double>& mean) {
  if (sentence.empty()) {
    throw DomainError("encode: empty sentence");
  }
  const std::size_t d = enc.dim();
  std::fill(mean.begin(), mean.end(), 0.0);
  for (TokenId t : sentence) {
    const TokenId id = t < enc.token_table.rows() ? t : Vocab::kUnknown;
    const auto row = enc.token_table.row(id);
    for (std::size_t l = 0; l < d; ++l) mean[l] += row[l];
  }
  const double inv = 1.0 / static_cast<double>(sentence.size());
  for (double& v : mean) v *= inv;
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t l = 0; l < d; ++l) acc += enc.projection(k, l) * mean[l];
    out[k] = acc;
  }
}

}  // namespace

std::vector<double> encode(const StudentEncoder& enc, std::span<const TokenId> sentence) {
  std::vector<double> out(enc.dim());
  std::vector<double> mean(enc.dim());
  encode_into(enc, sentence, out, mean);
  return out;
}

EmbeddingMatrix encode_batch(const StudentEncoder& enc, std::span<const TokenSeq> sentences) {
  EmbeddingMatrix out(sentences.size(), enc.dim());
  std::vector<double> mean(enc.dim());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    encode_into(enc, sentences[i], out.row(i), mean);
  }
  return out;
}

EmbeddingMatrix encode_texts(const StudentEncoder& enc, std::span<const std::string> sentences) {
  std::vector<TokenSeq> ids;
  ids.reserve(sentences.size());
  for (const auto& s : sentences) ids.push_back(enc.vocab.encode(s));
  return encode_batch(enc, ids);
}

EncoderGradients EncoderGradients::zeros_like(const StudentEncoder& enc) {
  return {Matrix(enc.token_table.rows(), enc.token_table.cols()),
          Matrix(enc.projection.rows(), enc.projection.cols())};
}

void backprop_embeddings(const StudentEncoder& enc, std::span<const TokenSeq> sentences,
                         const Matrix& grad_embeddings, EncoderGradients& acc) {
  const std::size_t d = enc.dim();
  if (grad_embeddings.rows() != sentences.size() || grad_embeddings.cols() != d) {
    throw ShapeError("backprop_embeddings: gradient is " + std::to_string(grad_embeddings.rows()) + "x" +
                     std::to_string(grad_embeddings.cols()) + ", batch is " +
                     std::to_string(sentences.size()) + "x" + std::to_string(d));
  }
  std::vector<double> mean(d);
  std::vector<double> dmean(d);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& sent = sentences[i];
    if (sent.empty()) {
      throw DomainError("backprop_embeddings: empty sentence");
    }
    const auto g = grad_embeddings.row(i);
    std::fill(mean.begin(), mean.end(), 0.0);
    for (TokenId t : sent) {
      const TokenId id = t < enc.token_table.rows() ? t : Vocab::kUnknown;
      const auto row = enc.token_table.row(id);
      for (std::size_t l = 0; l < d; ++l) mean[l] += row[l];
    }
    const double inv = 1.0 / static_cast<double>(sent.size());
    for (double& v : mean) v *= inv;

    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t l = 0; l < d; ++l) acc.projection(k, l) += g[k] * mean[l];
    }
    for (std::size_t l = 0; l < d; ++l) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += enc.projection(k, l) * g[k];
      dmean[l] = s * inv;
    }
    for (TokenId t : sent) {
      const TokenId id = t < enc.token_table.rows() ? t : Vocab::kUnknown;
      auto row = acc.token_table.row(id);
      for (std::size_t l = 0; l < d; ++l) row[l] += dmean[l];
    }
  }
}

ParameterUpdate sgd_update(double lr) {
  return [lr](ParameterSlot, Matrix& param, const Matrix& grad) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      param.values()[k] -= lr * grad.values()[k];
    }
  };
}

EncoderGradients encoder_gradient_step(StudentEncoder& enc, const Matrix& grad_src, const Matrix& grad_tgt,
                                       std::span<const TokenSeq> src_ids, std::span<const TokenSeq> tgt_ids,
                                       const ParameterUpdate& update) {
  auto grads = EncoderGradients::zeros_like(enc);
  backprop_embeddings(enc, src_ids, grad_src, grads);
  backprop_embeddings(enc, tgt_ids, grad_tgt, grads);
  update(ParameterSlot::TokenTable, enc.token_table, grads.token_table);
  update(ParameterSlot::Projection, enc.projection, grads.projection);
  return grads;
}

// ---------------------------------------------------------------------------
// Teacher

namespace {

std::vector<double> normalized(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

TeacherOracle TeacherOracle::from_records(const std::vector<TeacherRecord>& records) {
  TeacherOracle oracle;
  for (const auto& rec : records) {
    if (oracle.dim_ == 0) {
      oracle.dim_ = rec.embedding.size();
    } else if (rec.embedding.size() != oracle.dim_) {
      throw DataError("teacher table: embedding for '" + rec.sentence + "' has dimension " +
                      std::to_string(rec.embedding.size()) + ", expected " + std::to_string(oracle.dim_));
    }
    auto& by_sentence = oracle.table_[rec.lang];
    auto [it, inserted] = by_sentence.emplace(rec.sentence, normalized(rec.embedding));
    if (!inserted && it->second != normalized(rec.embedding)) {
      spdlog::warn("teacher table: conflicting duplicate entry for [{}] '{}'; keeping the first", rec.lang,
                   rec.sentence);
    }
  }
  return oracle;
}

TeacherOracle TeacherOracle::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open teacher table " + path.string());
  }
  return from_records(parse_teacher_table(in, path.string()));
}

TeacherOracle TeacherOracle::synthetic(std::uint64_t seed, std::size_t dim, std::vector<Language> languages) {
  if (dim == 0) {
    throw ConfigError("synthetic teacher dimension must be positive");
  }
  TeacherOracle oracle;
  oracle.synthetic_ = true;
  oracle.seed_ = seed;
  oracle.dim_ = dim;
  oracle.synthetic_languages_ = {languages.begin(), languages.end()};
  return oracle;
}

bool TeacherOracle::covers(std::string_view lang) const {
  if (synthetic_) {
    return synthetic_languages_.contains(std::string(lang));
  }
  return table_.contains(std::string(lang));
}

void TeacherOracle::require_language(std::string_view lang) const {
  if (!covers(lang)) {
    throw ConfigError("teacher does not cover language '" + std::string(lang) + "'");
  }
}

std::set<Language> TeacherOracle::languages() const {
  if (synthetic_) {
    return synthetic_languages_;
  }
  std::set<Language> out;
  for (const auto& [lang, _] : table_) out.insert(lang);
  return out;
}

std::vector<double> TeacherOracle::embed(std::string_view sentence, std::string_view lang) const {
  require_language(lang);
  if (synthetic_) {
    std::string key(lang);
    key.push_back('\t');
    key.append(sentence);
    Rng rng(fnv1a64(key, 0xcbf29ce484222325ULL ^ seed_));
    std::vector<double> v(dim_);
    do {
      for (double& x : v) x = rng.normal();
    } while (l2_norm(v) == 0.0);
    return normalized(std::move(v));
  }
  const auto& by_sentence = table_.at(std::string(lang));
  auto it = by_sentence.find(std::string(sentence));
  if (it == by_sentence.end()) {
    throw DataError("teacher table has no [" + std::string(lang) + "] entry for '" + std::string(sentence) + "'");
  }
  return it->second;
}

EmbeddingMatrix TeacherOracle::embed_batch(std::span<const std::string> sentences, std::string_view lang) const {
  EmbeddingMatrix out(sentences.size(), dim_);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto v = embed(sentences[i], lang);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

std::vector<TeacherRecord> parse_teacher_table(std::istream& in, const std::string& source_name) {
  std::vector<TeacherRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line, '\t');
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (fields.size() != 3) {
      throw DataError(where + ": expected 3 tab-separated fields, found " + std::to_string(fields.size()));
    }
    TeacherRecord rec{std::string(fields[0]), std::string(fields[1]), {}};
    if (rec.lang.empty()) {
      throw DataError(where + ": empty language id");
    }
    std::string_view rest = fields[2];
    while (true) {
      rest = trim(rest);
      if (rest.empty()) break;
      const std::size_t sp = rest.find_first_of(" \t");
      const std::string_view tok = rest.substr(0, sp);
      double v = 0.0;
      if (!parse_double(tok, v)) {
        throw DataError(where + ": bad embedding value '" + std::string(tok) + "'");
      }
      rec.embedding.push_back(v);
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp);
    }
    if (rec.embedding.empty()) {
      throw DataError(where + ": empty embedding");
    }
    const double norm = l2_norm(rec.embedding);
    const double dev = std::abs(norm - 1.0);
    if (dev > 0.5) {
      throw DataError(where + ": embedding norm " + format_double(norm) + " is not close to 1");
    }
    if (dev > 1e-6) {
      spdlog::warn("{}: embedding norm {} deviates from 1; renormalizing", where, norm);
    }
    rec.embedding = normalized(std::move(rec.embedding));
    records.push_back(std::move(rec));
  }
  return records;
}

void write_teacher_table(std::ostream& out, const std::vector<TeacherRecord>& records) {
  for (const auto& rec : records) {
    out << rec.lang << '\t' << rec.sentence << '\t';
    for (std::size_t k = 0; k < rec.embedding.size(); ++k) {
      if (k) out << ' ';
      out << format_double(rec.embedding[k]);
    }
    out << '\n';
  }
}

}  // namespace softcl
