#include "softcl/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "softcl/errors.hpp"

namespace softcl {

namespace {

double dot(std::span<const double> u, std::span<const double> v) {
  double acc = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    acc += u[k] * v[k];
  }
  return acc;
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) {
    throw NumericalError(std::string(op) + ": non-finite input");
  }
}

// Writes log-softmax of `n` strided values starting at `in` into `out`.
void log_softmax_strided(const double* in, double* out, std::size_t n, std::size_t stride) {
  double mx = in[0];
  for (std::size_t k = 1; k < n; ++k) {
    mx = std::max(mx, in[k * stride]);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sum += std::exp(in[k * stride] - mx);
  }
  const double log_z = mx + std::log(sum);
  for (std::size_t k = 0; k < n; ++k) {
    out[k * stride] = in[k * stride] - log_z;
  }
}

void softmax_strided(const double* in, double* out, std::size_t n, std::size_t stride) {
  double mx = in[0];
  for (std::size_t k = 1; k < n; ++k) {
    mx = std::max(mx, in[k * stride]);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    out[k * stride] = std::exp(in[k * stride] - mx);
    sum += out[k * stride];
  }
  for (std::size_t k = 0; k < n; ++k) {
    out[k * stride] /= sum;
  }
}

}  // namespace

void validate_embeddings(const EmbeddingMatrix& m, std::string_view what) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw ShapeError(std::string(what) + ": embedding matrix must have N >= 1 rows and d >= 1 columns");
  }
  if (!m.all_finite()) {
    throw NumericalError(std::string(what) + ": embedding matrix has non-finite entries");
  }
}

double l2_norm(std::span<const double> u) {
  return std::sqrt(dot(u, u));
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()) + ")");
  }
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) {
    throw DomainError("cosine: zero-norm vector");
  }
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

std::vector<double> row_norms(const EmbeddingMatrix& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    norms[i] = l2_norm(m.row(i));
    if (norms[i] == 0.0) {
      throw DomainError("row " + std::to_string(i) + " has zero norm");
    }
    if (!std::isfinite(norms[i])) {
      throw NumericalError("row " + std::to_string(i) + " has non-finite norm");
    }
  }
  return norms;
}

Matrix cosine_matrix(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  validate_embeddings(a, "cosine_matrix");
  validate_embeddings(b, "cosine_matrix");
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_matrix: dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
  const auto na = row_norms(a);
  const auto nb = row_norms(b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = std::clamp(dot(a.row(i), b.row(j)) / (na[i] * nb[j]), -1.0, 1.0);
    }
  }
  return out;
}

SimilarityMatrix scaled_similarity_matrix(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                          double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("scaled_similarity_matrix: temperature must be positive");
  }
  if (a.rows() != b.rows()) {
    throw ShapeError("scaled_similarity_matrix: row count mismatch (" + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()) + ")");
  }
  SimilarityMatrix sim{cosine_matrix(a, b), temperature};
  sim.values *= 1.0 / temperature;
  return sim;
}

Matrix row_softmax(const Matrix& m) {
  require_finite(m, "row_softmax");
  Matrix out(m.rows(), m.cols());
  if (m.cols() == 0) {
    return out;
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    softmax_strided(m.row(i).data(), out.row(i).data(), m.cols(), 1);
  }
  return out;
}

Matrix col_softmax(const Matrix& m) {
  require_finite(m, "col_softmax");
  Matrix out(m.rows(), m.cols());
  if (m.rows() == 0) {
    return out;
  }
  for (std::size_t j = 0; j < m.cols(); ++j) {
    softmax_strided(m.values().data() + j, out.values().data() + j, m.rows(), m.cols());
  }
  return out;
}

Matrix row_log_softmax(const Matrix& m) {
  require_finite(m, "row_log_softmax");
  Matrix out(m.rows(), m.cols());
  if (m.cols() == 0) {
    return out;
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    log_softmax_strided(m.row(i).data(), out.row(i).data(), m.cols(), 1);
  }
  return out;
}

Matrix col_log_softmax(const Matrix& m) {
  require_finite(m, "col_log_softmax");
  Matrix out(m.rows(), m.cols());
  if (m.rows() == 0) {
    return out;
  }
  for (std::size_t j = 0; j < m.cols(); ++j) {
    log_softmax_strided(m.values().data() + j, out.values().data() + j, m.rows(), m.cols());
  }
  return out;
}

}  // namespace softcl
