#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "softcl/data.hpp"
#include "softcl/labels.hpp"
#include "softcl/loss.hpp"
#include "softcl/model.hpp"

namespace softcl {

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  Matrix m;
  Matrix v;
  std::uint64_t step = 0;
};

/// One AdamW step with bias-corrected moments and decoupled weight decay:
///   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
/// Throws NumericalError if `grads` has NaN/Inf.
void adamw_step(Matrix& params, const Matrix& grads, AdamWState& state, double lr, const AdamWParams& hp);

/// lr0 * (1 - step / total_steps).
double lr_schedule(std::size_t step, std::size_t total_steps, double lr0);

enum class Objective { Contrastive, Mse };

std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);

struct TrainerConfig {
  std::size_t max_epochs = 30;
  std::size_t global_batch = 32;
  std::size_t shards = 2;
  double lr0 = 5e-3;
  AdamWParams adamw;
  std::size_t patience = 3;
  std::uint64_t seed = 7;
  LossConfig loss;
  Objective objective = Objective::Contrastive;
  LanguagePriority priority = LanguagePriority::defaults();

  void validate() const;
  std::size_t shard_size() const { return global_batch / shards; }
};

/// Aligned sentences of one (sub-)batch. `rows` indexes the originating corpus.
struct ParallelBatch {
  Language src_lang;
  Language tgt_lang;
  std::vector<std::size_t> rows;
  std::vector<std::string> src;
  std::vector<std::string> tgt;

  std::size_t size() const noexcept { return rows.size(); }
};

/// Concatenates equally sized shard batches in shard order, so that every
/// pooled sentence is an in-batch negative for every other.
ParallelBatch pool_shards(std::span<const ParallelBatch> shards);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double lr = 0.0;  // rate used by the last step of the epoch
  double loss = 0.0;
  double l_row = 0.0;
  double l_col = 0.0;
  double l_cross = 0.0;
  double l_mono = 0.0;
  double valid_acc_src2tgt = 0.0;
  double valid_acc_tgt2src = 0.0;
  double valid_acc_avg = 0.0;
};

struct TrainHistory {
  double initial_loss = 0.0;           // loss of the first batch before any update
  double initial_valid_acc_avg = 0.0;  // validation accuracy of the untrained encoder
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  nlohmann::ordered_json to_json() const;
};

struct FitResult {
  StudentEncoder encoder;  // best validation checkpoint
  TrainHistory history;
  std::string rng_state;   // trainer PRNG after the last completed epoch
};

/// Teacher embeddings of every corpus sentence a label mode needs, computed
/// once; labels for each pooled batch are built from these rows.
class TeacherCache {
 public:
  TeacherCache(const ParallelCorpus& corpus, const TeacherOracle& teacher, LabelMode mode, Objective objective,
               double temperature, const LanguagePriority& priority);

  LabelMatrix labels(std::span<const std::size_t> rows) const;

  /// Teacher source-side embeddings, for the MSE objective.
  Matrix source_embeddings(std::span<const std::size_t> rows) const;

  const Language& anchor() const noexcept { return anchor_; }

 private:
  LabelMode mode_;
  double temperature_;
  Language anchor_;
  bool anchor_is_src_ = true;
  Matrix src_;
  Matrix tgt_;
};

/// Mini-batch training with shard pooling, per-batch teacher labels, AdamW
/// and linear decay, and early stopping on validation retrieval accuracy.
FitResult fit(StudentEncoder student, std::span<const ParallelCorpus> corpora, const TeacherOracle& teacher,
              const ParallelCorpus& valid, const TrainerConfig& cfg);

/// Loss of one pooled batch under the configured objective (no update).
LossBundle batch_loss(const StudentEncoder& student, const ParallelBatch& batch, const TeacherCache& cache,
                      const TrainerConfig& cfg);

/// Mean teacher_agreement over consecutive batches of `batch_size` pairs of
/// `corpus`, comparing the chosen student similarity (cross, src-src or
/// tgt-tgt) with anchor-language Priority labels.
enum class AgreementView { Cross, MonoSource, MonoTarget };
double mean_teacher_agreement(const StudentEncoder& student, const ParallelCorpus& corpus,
                              const TeacherOracle& teacher, const TrainerConfig& cfg, std::size_t batch_size,
                              AgreementView view);

struct Checkpoint {
  StudentEncoder encoder;
  std::vector<std::pair<std::string, std::string>> config;
  std::string rng_state;
};

/// Text container, see README "Checkpoint format".
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace softcl
