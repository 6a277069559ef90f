#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "softcl/matrix.hpp"

namespace softcl {

/// N x d, one sentence embedding per row. Entries finite, N >= 1, d >= 1.
using EmbeddingMatrix = Matrix;

/// Temperature-scaled cosine similarities, entry (i, j) = cos(a_i, b_j) / tau.
struct SimilarityMatrix {
  Matrix values;
  double temperature = 1.0;

  std::size_t size() const noexcept { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Throws ShapeError for an empty matrix and NumericalError for NaN/Inf entries.
void validate_embeddings(const EmbeddingMatrix& m, std::string_view what);

/// dot(u, v) / (|u| |v|), clamped to [-1, 1].
/// Throws DomainError on a zero-norm argument, ShapeError on a length mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

double l2_norm(std::span<const double> u);

/// Euclidean norm of every row. Throws DomainError if any row is zero.
std::vector<double> row_norms(const EmbeddingMatrix& m);

/// Entry (i, j) = cosine(a.row(i), b.row(j)) / temperature.
///
/// A and B must have the same number of rows (the N x N batch contract);
/// use cosine_matrix for rectangular query/candidate sets.
SimilarityMatrix scaled_similarity_matrix(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                          double temperature);

/// Unscaled cosines between every row of `a` and every row of `b`; row counts may differ.
Matrix cosine_matrix(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

/// Softmax of each row, stabilized by subtracting the row maximum.
Matrix row_softmax(const Matrix& m);

/// Softmax of each column (normalizer runs over the first index).
Matrix col_softmax(const Matrix& m);

/// log(row_softmax(m)), computed as x - max - log(sum exp(x - max)).
Matrix row_log_softmax(const Matrix& m);

/// log(col_softmax(m)).
Matrix col_log_softmax(const Matrix& m);

}  // namespace softcl
