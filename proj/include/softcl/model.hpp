#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "softcl/labels.hpp"
#include "softcl/matrix.hpp"
#include "softcl/rng.hpp"
#include "softcl/simcore.hpp"

namespace softcl {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

/// Token to dense id map. Id 0 is always the unknown token.
class Vocab {
 public:
  static constexpr TokenId kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocab();

  /// Appends `token` if absent; returns its id.
  TokenId add(const std::string& token);

  /// Id of `token`, or kUnknown.
  TokenId id(std::string_view token) const;

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }

  /// tokenize() then map to ids.
  TokenSeq encode(std::string_view sentence) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Bag-of-embeddings sentence encoder: projection * mean(token_table[ids]).
struct StudentEncoder {
  Vocab vocab;
  Matrix token_table;  // V x d
  Matrix projection;   // d x d, applied as e = P m

  std::size_t dim() const noexcept { return projection.rows(); }

  /// Gaussian(0, stddev) initialization of both parameter matrices.
  static StudentEncoder initialize(Vocab vocab, std::size_t dim, Rng& rng, double stddev = 0.1);

  void validate() const;

  friend bool operator==(const StudentEncoder&, const StudentEncoder&) = default;
};

std::vector<double> encode(const StudentEncoder& enc, std::span<const TokenId> sentence);

/// Row i is encode(enc, sentences[i]).
EmbeddingMatrix encode_batch(const StudentEncoder& enc, std::span<const TokenSeq> sentences);

/// Tokenizes with the encoder vocabulary, then encode_batch.
EmbeddingMatrix encode_texts(const StudentEncoder& enc, std::span<const std::string> sentences);

struct EncoderGradients {
  Matrix token_table;
  Matrix projection;

  static EncoderGradients zeros_like(const StudentEncoder& enc);
};

/// Accumulates d(loss)/d(parameters) into `acc`, given d(loss)/d(embeddings) for the
/// batch `sentences`. Chain: e = P m, m = mean of token rows.
void backprop_embeddings(const StudentEncoder& enc, std::span<const TokenSeq> sentences,
                         const Matrix& grad_embeddings, EncoderGradients& acc);

enum class ParameterSlot { TokenTable, Projection };

/// Applies a parameter delta given its gradient; e.g. an AdamW or SGD step.
using ParameterUpdate = std::function<void(ParameterSlot slot, Matrix& param, const Matrix& grad)>;

/// param -= lr * grad
ParameterUpdate sgd_update(double lr);

/// Back-propagates the source and target embedding gradients into the encoder
/// parameters and hands each parameter/gradient pair to `update`.
EncoderGradients encoder_gradient_step(StudentEncoder& enc, const Matrix& grad_src, const Matrix& grad_tgt,
                                       std::span<const TokenSeq> src_ids, std::span<const TokenSeq> tgt_ids,
                                       const ParameterUpdate& update);

struct TeacherRecord {
  Language lang;
  std::string sentence;
  std::vector<double> embedding;
};

/// Frozen embedding provider g(.). Either a table loaded from disk or a
/// seeded generator that hashes (language, sentence) into a Gaussian draw.
/// Every returned vector has unit norm and depends only on its inputs.
class TeacherOracle {
 public:
  static TeacherOracle from_records(const std::vector<TeacherRecord>& records);

  /// Reads the teacher table format: `lang <TAB> sentence <TAB> floats`.
  static TeacherOracle load(const std::filesystem::path& path);

  static TeacherOracle synthetic(std::uint64_t seed, std::size_t dim, std::vector<Language> languages);

  std::vector<double> embed(std::string_view sentence, std::string_view lang) const;
  EmbeddingMatrix embed_batch(std::span<const std::string> sentences, std::string_view lang) const;

  bool covers(std::string_view lang) const;
  void require_language(std::string_view lang) const;
  std::set<Language> languages() const;
  std::size_t dim() const noexcept { return dim_; }
  bool file_backed() const noexcept { return !synthetic_; }

 private:
  TeacherOracle() = default;

  bool synthetic_ = false;
  std::uint64_t seed_ = 0;
  std::size_t dim_ = 0;
  std::set<Language> synthetic_languages_;
  std::map<Language, std::unordered_map<std::string, std::vector<double>>> table_;
};

/// Parses teacher-table text. Norms off by more than 1e-6 are warned about,
/// off by more than 0.5 rejected; all vectors are renormalized.
std::vector<TeacherRecord> parse_teacher_table(std::istream& in, const std::string& source_name);

void write_teacher_table(std::ostream& out, const std::vector<TeacherRecord>& records);

}  // namespace softcl
