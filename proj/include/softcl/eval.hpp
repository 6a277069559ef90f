#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "softcl/data.hpp"
#include "softcl/labels.hpp"
#include "softcl/model.hpp"
#include "softcl/simcore.hpp"

namespace softcl {

struct RetrievalAccuracy {
  double src2tgt = 0.0;
  double tgt2src = 0.0;
  double avg = 0.0;
};

/// Throws ShapeError unless `gold` is a permutation of [0, n).
void validate_alignment(std::span<const std::size_t> gold, std::size_t n);

std::vector<std::size_t> identity_alignment(std::size_t n);

/// Nearest-neighbour (cosine) retrieval in both directions. gold[i] is the
/// target row of source i. Ties resolve to the lowest index.
RetrievalAccuracy retrieval_accuracy(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                     std::span<const std::size_t> gold);

enum class MarginScoring { Ratio, Cosine };

std::string_view to_string(MarginScoring scoring);
MarginScoring parse_margin_scoring(std::string_view text);

/// Fraction of sources whose best-scoring target is not gold[i].
///
/// Ratio scoring: cos(x, y) / (knn_x / 2 + knn_y / 2), where knn_x is the mean
/// cosine of x to its k most similar targets and knn_y the mean cosine of y
/// to its k most similar sources. k is clipped to N - 1. Cosine scoring
/// ranks by plain cosine.
double xsim_error_rate(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt, std::span<const std::size_t> gold,
                       std::size_t k = 4, MarginScoring scoring = MarginScoring::Ratio);

/// Fractional ranks (1-based, ties share the average rank).
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. DomainError for constant input.
double spearman(std::span<const double> pred, std::span<const double> gold);

/// Cosine between encoded sentence pairs, correlated (Spearman) with gold scores.
double sts_eval(const StudentEncoder& encoder, std::span<const StsRecord> records);

/// Predicted cosine per record; the first half of sts_eval.
std::vector<double> sts_predictions(const StudentEncoder& encoder, std::span<const StsRecord> records);

/// Spearman correlation between the off-diagonal entries of
/// row_softmax(student_sim) and of `labels`, both flattened row-major.
double teacher_agreement(const SimilarityMatrix& student_sim, const LabelMatrix& labels);

/// Bitext / STS report. Field names are part of the CLI contract.
struct EvalReport {
  RetrievalAccuracy accuracy;
  std::optional<double> xsim_error;
  MarginScoring scoring = MarginScoring::Ratio;
  std::size_t k = 4;
  std::optional<double> spearman;
  std::size_t count = 0;

  nlohmann::ordered_json to_json() const;
};

EvalReport evaluate_bitext(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                           std::span<const std::size_t> gold, std::size_t k, MarginScoring scoring);

}  // namespace softcl
