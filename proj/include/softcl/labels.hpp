#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "softcl/matrix.hpp"
#include "softcl/simcore.hpp"

namespace softcl {

using Language = std::string;

enum class LabelMode { Hard, Priority, Average };

std::string_view to_string(LabelMode mode);
LabelMode parse_label_mode(std::string_view text);

/// Row-stochastic N x N target matrix w(i, j).
struct LabelMatrix {
  Matrix values;
  LabelMode mode = LabelMode::Hard;

  std::size_t size() const noexcept { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Ordered language list, highest priority first. Nonempty, no duplicates.
class LanguagePriority {
 public:
  explicit LanguagePriority(std::vector<Language> order);

  /// en, ru, ja, fr, ko: ordered by training-corpus volume.
  static LanguagePriority defaults();

  /// Parses a comma-separated list such as "en,ru,ja".
  static LanguagePriority parse(std::string_view csv);

  std::optional<std::size_t> rank(std::string_view lang) const;
  const std::vector<Language>& order() const noexcept { return order_; }
  std::string to_csv() const;

 private:
  std::vector<Language> order_;
};

/// w(i, j) = [i == j].
LabelMatrix hard_labels(std::size_t n);

/// Returns whichever of the two languages ranks higher in `priority`.
/// Throws DomainError when they are identical or either is unlisted.
Language select_anchor(std::string_view lang_a, std::string_view lang_b,
                       const LanguagePriority& priority);

/// Row softmax of the anchor-language teacher similarities cos(g(s_i), g(s_j)) / tau.
LabelMatrix priority_labels(const EmbeddingMatrix& anchor_teacher, double temperature);

/// Row softmax of the mean of the two mono-lingual teacher similarity matrices.
LabelMatrix average_labels(const EmbeddingMatrix& src_teacher, const EmbeddingMatrix& tgt_teacher,
                           double temperature);

/// Same as above with the scaled similarities already computed.
LabelMatrix average_labels(const SimilarityMatrix& src_sim, const SimilarityMatrix& tgt_sim);

/// Largest deviation of any row sum from 1.
double max_row_sum_error(const Matrix& m);

}  // namespace softcl
