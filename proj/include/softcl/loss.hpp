#pragma once

#include "softcl/labels.hpp"
#include "softcl/matrix.hpp"
#include "softcl/simcore.hpp"

namespace softcl {

struct LossConfig {
  double temperature = 0.1;
  double lambda = 0.1;  // weight of the cross-lingual term; only used when tcm is set
  LabelMode mode = LabelMode::Priority;
  bool tcm = false;     // add the mono-lingual term

  void validate() const;
};

/// Scalar loss components plus gradients of `total` w.r.t. the student
/// source and target embeddings.
struct LossBundle {
  double l_row = 0.0;
  double l_col = 0.0;
  double l_cross = 0.0;
  double l_mono = 0.0;
  double total = 0.0;
  Matrix grad_src;
  Matrix grad_tgt;
};

/// -(1/N) sum_ij W(i,j) log softmax_j(sim(i, .)): normalizer over targets.
double l_row(const SimilarityMatrix& sim, const LabelMatrix& labels);

/// -(1/N) sum_ij W(i,j) log softmax_i(sim(., j)): normalizer over sources.
double l_col(const SimilarityMatrix& sim, const LabelMatrix& labels);

/// Mono-lingual distillation term: l_col(sim_ss, W) + l_col(sim_tt, W).
/// Both terms normalize over the first index.
double l_mono(const SimilarityMatrix& sim_ss, const SimilarityMatrix& sim_tt, const LabelMatrix& labels);

/// Loss value only (no gradients). total = lambda * l_cross + l_mono with tcm,
/// l_cross otherwise.
LossBundle loss_components(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                           const LabelMatrix& labels, const LossConfig& cfg);

/// Loss components together with analytic gradients.
LossBundle total_loss(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                      const LabelMatrix& labels, const LossConfig& cfg);

struct EmbeddingGradients {
  Matrix grad_src;
  Matrix grad_tgt;
};

/// Exact gradient of total_loss(...).total w.r.t. every student embedding entry.
EmbeddingGradients loss_gradients(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                                  const LabelMatrix& labels, const LossConfig& cfg);

struct MseResult {
  double loss = 0.0;
  Matrix grad_src;
  Matrix grad_tgt;
};

/// Embedding-regression baseline: MSE(student_src, teacher_src) + MSE(student_tgt, teacher_src),
/// each averaged over all N*d entries. Both student sides regress onto the
/// teacher's source-language embedding.
MseResult mse_distill_loss(const EmbeddingMatrix& student_src, const EmbeddingMatrix& student_tgt,
                           const EmbeddingMatrix& teacher_src);

}  // namespace softcl
