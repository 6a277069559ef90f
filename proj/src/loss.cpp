#include "softcl/loss.hpp"

#include <cmath>
#include <string>

#include "softcl/errors.hpp"

namespace softcl {

namespace {

void check_square(const Matrix& sim, const LabelMatrix& labels, const char* op) {
  if (sim.rows() != sim.cols()) {
    throw ShapeError(std::string(op) + ": similarity matrix must be square");
  }
  if (labels.values.rows() != sim.rows() || labels.values.cols() != sim.cols()) {
    throw ShapeError(std::string(op) + ": label matrix is " + std::to_string(labels.values.rows()) + "x" +
                     std::to_string(labels.values.cols()) + ", similarities are " +
                     std::to_string(sim.rows()) + "x" + std::to_string(sim.cols()));
  }
}

double weighted_nll(const Matrix& log_p, const Matrix& w) {
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w.values()[k] != 0.0) {
      acc -= w.values()[k] * log_p.values()[k];
    }
  }
  return acc / static_cast<double>(w.rows());
}

// dL_row/dS(i,j) = (p(i,j) * sum_k W(i,k) - W(i,j)) / N, scaled by `weight` and accumulated.
void add_row_ce_grad(const Matrix& logits, const Matrix& w, double weight, Matrix& g) {
  const Matrix p = row_softmax(logits);
  const double n = static_cast<double>(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double mass = 0.0;
    for (double v : w.row(i)) mass += v;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      g(i, j) += weight * (p(i, j) * mass - w(i, j)) / n;
    }
  }
}

// Column-normalized counterpart; column mass of a soft label matrix is not 1 in general.
void add_col_ce_grad(const Matrix& logits, const Matrix& w, double weight, Matrix& g) {
  const Matrix p = col_softmax(logits);
  const double n = static_cast<double>(w.rows());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double mass = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) mass += w(i, j);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      g(i, j) += weight * (p(i, j) * mass - w(i, j)) / n;
    }
  }
}

// Chain dL/dS through S(i,j) = cos(a_i, b_j) / tau. grad_a and grad_b may alias.
void backprop_scaled_cosine(const Matrix& a, const Matrix& b, const Matrix& dlogits, double temperature,
                            Matrix& grad_a, Matrix& grad_b) {
  const auto na = row_norms(a);
  const auto nb = row_norms(b);
  const std::size_t d = a.cols();
  Matrix ua = a;
  Matrix ub = b;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (double& v : ua.row(i)) v /= na[i];
  }
  for (std::size_t j = 0; j < b.rows(); ++j) {
    for (double& v : ub.row(j)) v /= nb[j];
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double g = dlogits(i, j) / temperature;
      if (g == 0.0) continue;
      double c = 0.0;
      for (std::size_t k = 0; k < d; ++k) c += ua(i, k) * ub(j, k);
      const double ga = g / na[i];
      const double gb = g / nb[j];
      for (std::size_t k = 0; k < d; ++k) {
        grad_a(i, k) += ga * (ub(j, k) - c * ua(i, k));
        grad_b(j, k) += gb * (ua(i, k) - c * ub(j, k));
      }
    }
  }
}

void check_pair(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt, const LabelMatrix& labels) {
  validate_embeddings(src, "student source embeddings");
  validate_embeddings(tgt, "student target embeddings");
  if (src.rows() != tgt.rows() || src.cols() != tgt.cols()) {
    throw ShapeError("student embeddings differ in shape: " + std::to_string(src.rows()) + "x" +
                     std::to_string(src.cols()) + " vs " + std::to_string(tgt.rows()) + "x" +
                     std::to_string(tgt.cols()));
  }
  if (labels.values.rows() != src.rows() || labels.values.cols() != src.rows()) {
    throw ShapeError("label matrix does not match batch size " + std::to_string(src.rows()));
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda must be nonnegative");
  }
}

double l_row(const SimilarityMatrix& sim, const LabelMatrix& labels) {
  check_square(sim.values, labels, "l_row");
  return weighted_nll(row_log_softmax(sim.values), labels.values);
}

double l_col(const SimilarityMatrix& sim, const LabelMatrix& labels) {
  check_square(sim.values, labels, "l_col");
  return weighted_nll(col_log_softmax(sim.values), labels.values);
}

double l_mono(const SimilarityMatrix& sim_ss, const SimilarityMatrix& sim_tt, const LabelMatrix& labels) {
  return l_col(sim_ss, labels) + l_col(sim_tt, labels);
}

LossBundle loss_components(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                           const LabelMatrix& labels, const LossConfig& cfg) {
  cfg.validate();
  check_pair(student_src, student_tgt, labels);
  LossBundle out;
  const auto cross = scaled_similarity_matrix(student_src, student_tgt, cfg.temperature);
  out.l_row = l_row(cross, labels);
  out.l_col = l_col(cross, labels);
  out.l_cross = out.l_row + out.l_col;
  if (cfg.tcm) {
    out.l_mono = l_mono(scaled_similarity_matrix(student_src, student_src, cfg.temperature),
                        scaled_similarity_matrix(student_tgt, student_tgt, cfg.temperature), labels);
    out.total = cfg.lambda * out.l_cross + out.l_mono;
  } else {
    out.total = out.l_cross;
  }
  return out;
}

EmbeddingGradients loss_gradients(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                                  const LabelMatrix& labels, const LossConfig& cfg) {
  cfg.validate();
  check_pair(student_src, student_tgt, labels);
  const std::size_t n = student_src.rows();
  const double cross_weight = cfg.tcm ? cfg.lambda : 1.0;

  EmbeddingGradients out{Matrix(n, student_src.cols()), Matrix(n, student_tgt.cols())};

  const auto cross = scaled_similarity_matrix(student_src, student_tgt, cfg.temperature);
  Matrix d_cross(n, n);
  add_row_ce_grad(cross.values, labels.values, cross_weight, d_cross);
  add_col_ce_grad(cross.values, labels.values, cross_weight, d_cross);
  backprop_scaled_cosine(student_src, student_tgt, d_cross, cfg.temperature, out.grad_src, out.grad_tgt);

  if (cfg.tcm) {
    const auto ss = scaled_similarity_matrix(student_src, student_src, cfg.temperature);
    const auto tt = scaled_similarity_matrix(student_tgt, student_tgt, cfg.temperature);
    Matrix d_ss(n, n);
    Matrix d_tt(n, n);
    add_col_ce_grad(ss.values, labels.values, 1.0, d_ss);
    add_col_ce_grad(tt.values, labels.values, 1.0, d_tt);
    backprop_scaled_cosine(student_src, student_src, d_ss, cfg.temperature, out.grad_src, out.grad_src);
    backprop_scaled_cosine(student_tgt, student_tgt, d_tt, cfg.temperature, out.grad_tgt, out.grad_tgt);
  }
  return out;
}

LossBundle total_loss(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                      const LabelMatrix& labels, const LossConfig& cfg) {
  LossBundle out = loss_components(student_src, student_tgt, labels, cfg);
  auto grads = loss_gradients(student_src, student_tgt, labels, cfg);
  out.grad_src = std::move(grads.grad_src);
  out.grad_tgt = std::move(grads.grad_tgt);
  return out;
}

MseResult mse_distill_loss(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                           const EmbeddingMatrix& teacher_src) {
  validate_embeddings(student_src, "mse_distill_loss student source");
  validate_embeddings(student_tgt, "mse_distill_loss student target");
  validate_embeddings(teacher_src, "mse_distill_loss teacher");
  auto same_shape = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
  };
  if (!same_shape(student_src, teacher_src) || !same_shape(student_tgt, teacher_src)) {
    throw ShapeError("mse_distill_loss: student and teacher embeddings must share shape (teacher dim " +
                     std::to_string(teacher_src.cols()) + ", student dim " +
                     std::to_string(student_src.cols()) + ")");
  }
  const double count = static_cast<double>(teacher_src.size());
  MseResult out{0.0, Matrix(student_src.rows(), student_src.cols()),
                Matrix(student_tgt.rows(), student_tgt.cols())};
  double src_sq = 0.0;
  double tgt_sq = 0.0;
  for (std::size_t k = 0; k < teacher_src.size(); ++k) {
    const double ds = student_src.values()[k] - teacher_src.values()[k];
    const double dt = student_tgt.values()[k] - teacher_src.values()[k];
    src_sq += ds * ds;
    tgt_sq += dt * dt;
    out.grad_src.values()[k] = 2.0 * ds / count;
    out.grad_tgt.values()[k] = 2.0 * dt / count;
  }
  out.loss = src_sq / count + tgt_sq / count;
  return out;
}

}  // namespace softcl
