#include "softcl/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "softcl/errors.hpp"
#include "softcl/eval.hpp"
#include "softcl/rng.hpp"

namespace softcl {

void adamw_step(Matrix& params, const Matrix& grads, AdamWState& state, double lr, const AdamWParams& hp) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw ShapeError("adamw_step: gradient shape does not match parameters");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads.values()[k])) {
      throw NumericalError("adamw_step: non-finite gradient at flat index " + std::to_string(k) + " (value " +
                           std::to_string(grads.values()[k]) + ", optimizer step " +
                           std::to_string(state.step + 1) + ")");
    }
  }
  if (state.m.rows() != params.rows() || state.m.cols() != params.cols()) {
    state.m = Matrix(params.rows(), params.cols());
    state.v = Matrix(params.rows(), params.cols());
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  auto p = params.values();
  auto g = grads.values();
  auto m = state.m.values();
  auto v = state.v.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
    v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
    const double m_hat = m[k] / bc1;
    const double v_hat = v[k] / bc2;
    p[k] -= lr * hp.weight_decay * p[k];
    p[k] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

double lr_schedule(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) {
    throw DomainError("lr_schedule: total_steps must be positive");
  }
  if (step > total_steps) {
    throw DomainError("lr_schedule: step " + std::to_string(step) + " exceeds total " + std::to_string(total_steps));
  }
  return lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

std::string_view to_string(Objective objective) {
  return objective == Objective::Mse ? "mse" : "contrastive";
}

Objective parse_objective(std::string_view text) {
  if (text == "contrastive") return Objective::Contrastive;
  if (text == "mse") return Objective::Mse;
  throw ConfigError("unknown objective '" + std::string(text) + "' (expected contrastive or mse)");
}

void TrainerConfig::validate() const {
  loss.validate();
  if (global_batch == 0 || shards == 0 || global_batch % shards != 0) {
    throw ConfigError("global_batch (" + std::to_string(global_batch) + ") must be a positive multiple of shards (" +
                      std::to_string(shards) + ")");
  }
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be a nonnegative number");
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0) || !(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(adamw.eps > 0.0)) throw ConfigError("AdamW eps must be positive");
  if (!(adamw.weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
}

ParallelBatch pool_shards(std::span<const ParallelBatch> shards) {
  if (shards.empty()) {
    throw ShapeError("pool_shards: no shards");
  }
  ParallelBatch pooled{shards.front().src_lang, shards.front().tgt_lang, {}, {}, {}};
  const std::size_t per_shard = shards.front().size();
  for (std::size_t s = 0; s < shards.size(); ++s) {
    const auto& shard = shards[s];
    if (shard.size() != per_shard || shard.src.size() != per_shard || shard.tgt.size() != per_shard) {
      throw ShapeError("pool_shards: shard " + std::to_string(s) + " has " + std::to_string(shard.size()) +
                       " pairs, expected " + std::to_string(per_shard));
    }
    if (shard.src_lang != pooled.src_lang || shard.tgt_lang != pooled.tgt_lang) {
      throw ShapeError("pool_shards: shards mix language pairs");
    }
    pooled.rows.insert(pooled.rows.end(), shard.rows.begin(), shard.rows.end());
    pooled.src.insert(pooled.src.end(), shard.src.begin(), shard.src.end());
    pooled.tgt.insert(pooled.tgt.end(), shard.tgt.begin(), shard.tgt.end());
  }
  return pooled;
}

TeacherCache::TeacherCache(const ParallelCorpus& corpus, const TeacherOracle& teacher, LabelMode mode,
                           Objective objective, double temperature, const LanguagePriority& priority)
    : mode_(mode), temperature_(temperature) {
  anchor_ = corpus.src_lang;
  if (mode == LabelMode::Priority && objective == Objective::Contrastive) {
    anchor_ = select_anchor(corpus.src_lang, corpus.tgt_lang, priority);
  }
  anchor_is_src_ = anchor_ == corpus.src_lang;
  bool need_src = false;
  bool need_tgt = false;
  if (objective == Objective::Mse) {
    need_src = true;
  } else if (mode == LabelMode::Priority) {
    (anchor_is_src_ ? need_src : need_tgt) = true;
  } else if (mode == LabelMode::Average) {
    need_src = need_tgt = true;
  }
  if (need_src) {
    teacher.require_language(corpus.src_lang);
    src_ = teacher.embed_batch(corpus.sources(), corpus.src_lang);
  }
  if (need_tgt) {
    teacher.require_language(corpus.tgt_lang);
    tgt_ = teacher.embed_batch(corpus.targets(), corpus.tgt_lang);
  }
}

LabelMatrix TeacherCache::labels(std::span<const std::size_t> rows) const {
  switch (mode_) {
    case LabelMode::Hard:
      return hard_labels(rows.size());
    case LabelMode::Priority:
      return priority_labels(gather_rows(anchor_is_src_ ? src_ : tgt_, rows), temperature_);
    case LabelMode::Average:
      return average_labels(gather_rows(src_, rows), gather_rows(tgt_, rows), temperature_);
  }
  throw DomainError("unknown label mode");
}

Matrix TeacherCache::source_embeddings(std::span<const std::size_t> rows) const {
  if (src_.empty()) {
    throw DomainError("teacher source embeddings were not cached");
  }
  return gather_rows(src_, rows);
}

namespace {

struct TokenizedCorpus {
  std::vector<TokenSeq> src;
  std::vector<TokenSeq> tgt;
};

TokenizedCorpus tokenize_corpus(const Vocab& vocab, const ParallelCorpus& corpus) {
  TokenizedCorpus out;
  out.src.reserve(corpus.size());
  out.tgt.reserve(corpus.size());
  for (const auto& [s, t] : corpus.pairs) {
    out.src.push_back(vocab.encode(s));
    out.tgt.push_back(vocab.encode(t));
    if (out.src.back().empty() || out.tgt.back().empty()) {
      throw DataError(corpus.pair_name() + ": sentence with no tokens");
    }
  }
  return out;
}

std::vector<TokenSeq> gather_tokens(const std::vector<TokenSeq>& all, std::span<const std::size_t> rows) {
  std::vector<TokenSeq> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(all[r]);
  return out;
}

ParallelBatch make_shard(const ParallelCorpus& corpus, std::span<const std::size_t> rows) {
  ParallelBatch b{corpus.src_lang, corpus.tgt_lang, {rows.begin(), rows.end()}, {}, {}};
  for (std::size_t r : rows) {
    b.src.push_back(corpus.pairs[r].first);
    b.tgt.push_back(corpus.pairs[r].second);
  }
  return b;
}

LossBundle loss_for(const StudentEncoder& student, const std::vector<TokenSeq>& src_ids,
                    const std::vector<TokenSeq>& tgt_ids, std::span<const std::size_t> rows,
                    const TeacherCache& cache, const TrainerConfig& cfg) {
  const auto src = encode_batch(student, src_ids);
  const auto tgt = encode_batch(student, tgt_ids);
  if (cfg.objective == Objective::Mse) {
    auto mse = mse_distill_loss(src, tgt, cache.source_embeddings(rows));
    LossBundle out;
    out.total = mse.loss;
    out.grad_src = std::move(mse.grad_src);
    out.grad_tgt = std::move(mse.grad_tgt);
    return out;
  }
  return total_loss(src, tgt, cache.labels(rows), cfg.loss);
}

double validation_accuracy(const StudentEncoder& student, const TokenizedCorpus& valid) {
  const auto src = encode_batch(student, valid.src);
  const auto tgt = encode_batch(student, valid.tgt);
  return retrieval_accuracy(src, tgt, identity_alignment(src.rows())).avg;
}

}  // namespace

LossBundle batch_loss(const StudentEncoder& student, const ParallelBatch& batch, const TeacherCache& cache,
                      const TrainerConfig& cfg) {
  std::vector<TokenSeq> src_ids;
  std::vector<TokenSeq> tgt_ids;
  for (const auto& s : batch.src) src_ids.push_back(student.vocab.encode(s));
  for (const auto& t : batch.tgt) tgt_ids.push_back(student.vocab.encode(t));
  return loss_for(student, src_ids, tgt_ids, batch.rows, cache, cfg);
}

FitResult fit(StudentEncoder student, std::span<const ParallelCorpus> corpora, const TeacherOracle& teacher,
              const ParallelCorpus& valid, const TrainerConfig& cfg) {
  cfg.validate();
  student.validate();
  if (corpora.empty()) {
    throw ConfigError("fit: no training corpora");
  }
  if (valid.empty()) {
    throw ConfigError("fit: validation corpus is empty");
  }
  for (const auto& c : corpora) {
    c.validate();
    if (c.size() < cfg.global_batch) {
      throw ConfigError("fit: corpus " + c.pair_name() + " has " + std::to_string(c.size()) +
                        " pairs, fewer than one global batch of " + std::to_string(cfg.global_batch));
    }
  }

  std::vector<TeacherCache> caches;
  std::vector<TokenizedCorpus> tokens;
  for (const auto& c : corpora) {
    caches.emplace_back(c, teacher, cfg.loss.mode, cfg.objective, cfg.loss.temperature, cfg.priority);
    tokens.push_back(tokenize_corpus(student.vocab, c));
  }
  const TokenizedCorpus valid_tokens = tokenize_corpus(student.vocab, valid);

  std::size_t steps_per_epoch = 0;
  std::size_t max_batches = 0;
  for (const auto& c : corpora) {
    steps_per_epoch += c.size() / cfg.global_batch;
    max_batches = std::max(max_batches, c.size() / cfg.global_batch);
  }
  const std::size_t total_steps = std::max<std::size_t>(1, cfg.max_epochs * steps_per_epoch);

  FitResult result{student, {}, {}};
  result.history.initial_valid_acc_avg = validation_accuracy(student, valid_tokens);
  Rng rng(cfg.seed);
  AdamWState table_state;
  AdamWState proj_state;
  double best_acc = -std::numeric_limits<double>::infinity();
  std::size_t epochs_without_gain = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> order(corpora.size());
    for (std::size_t c = 0; c < corpora.size(); ++c) {
      order[c].resize(corpora[c].size());
      for (std::size_t i = 0; i < order[c].size(); ++i) order[c][i] = i;
      rng.shuffle(order[c]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < max_batches; ++b) {
      for (std::size_t c = 0; c < corpora.size(); ++c) {
        if (b >= corpora[c].size() / cfg.global_batch) continue;

        std::vector<ParallelBatch> shard_batches;
        for (std::size_t s = 0; s < cfg.shards; ++s) {
          const std::size_t begin = b * cfg.global_batch + s * cfg.shard_size();
          shard_batches.push_back(make_shard(
              corpora[c], std::span<const std::size_t>(order[c]).subspan(begin, cfg.shard_size())));
        }
        const ParallelBatch pooled = pool_shards(shard_batches);
        const auto src_ids = gather_tokens(tokens[c].src, pooled.rows);
        const auto tgt_ids = gather_tokens(tokens[c].tgt, pooled.rows);

        const LossBundle loss = loss_for(student, src_ids, tgt_ids, pooled.rows, caches[c], cfg);
        if (!std::isfinite(loss.total)) {
          std::ostringstream msg;
          msg << "non-finite training loss at epoch " << epoch << ", step " << step << " (" << corpora[c].pair_name()
              << "): total=" << loss.total << " l_row=" << loss.l_row << " l_col=" << loss.l_col
              << " l_mono=" << loss.l_mono;
          throw NumericalError(msg.str());
        }
        if (step == 0) result.history.initial_loss = loss.total;

        const double lr = lr_schedule(step, total_steps, cfg.lr0);
        encoder_gradient_step(student, loss.grad_src, loss.grad_tgt, src_ids, tgt_ids,
                              [&](ParameterSlot slot, Matrix& param, const Matrix& grad) {
                                adamw_step(param, grad,
                                           slot == ParameterSlot::TokenTable ? table_state : proj_state, lr,
                                           cfg.adamw);
                              });
        if (!student.token_table.all_finite() || !student.projection.all_finite()) {
          throw NumericalError("student parameters became non-finite at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step) + " (lr " + std::to_string(lr) + ")");
        }

        rec.loss += loss.total;
        rec.l_row += loss.l_row;
        rec.l_col += loss.l_col;
        rec.l_cross += loss.l_cross;
        rec.l_mono += loss.l_mono;
        rec.lr = lr;
        ++rec.steps;
        ++step;
      }
    }
    const double inv = rec.steps ? 1.0 / static_cast<double>(rec.steps) : 0.0;
    rec.loss *= inv;
    rec.l_row *= inv;
    rec.l_col *= inv;
    rec.l_cross *= inv;
    rec.l_mono *= inv;

    const auto src = encode_batch(student, valid_tokens.src);
    const auto tgt = encode_batch(student, valid_tokens.tgt);
    const auto acc = retrieval_accuracy(src, tgt, identity_alignment(src.rows()));
    rec.valid_acc_src2tgt = acc.src2tgt;
    rec.valid_acc_tgt2src = acc.tgt2src;
    rec.valid_acc_avg = acc.avg;
    result.history.epochs.push_back(rec);
    spdlog::info("epoch {:>3}  loss {:.6f}  valid acc {:.4f}  lr {:.3e}", epoch, rec.loss, acc.avg, rec.lr);
    result.rng_state = rng.state();

    if (acc.avg > best_acc) {
      best_acc = acc.avg;
      result.encoder = student;
      result.history.best_epoch = epoch;
      epochs_without_gain = 0;
    } else if (++epochs_without_gain >= cfg.patience) {
      result.history.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  if (result.rng_state.empty()) result.rng_state = rng.state();
  return result;
}

double mean_teacher_agreement(const StudentEncoder& student, const ParallelCorpus& corpus,
                              const TeacherOracle& teacher, const TrainerConfig& cfg, std::size_t batch_size,
                              AgreementView view) {
  if (batch_size < 3 || corpus.size() < batch_size) {
    throw ConfigError("mean_teacher_agreement: need batches of at least 3 pairs");
  }
  const TeacherCache cache(corpus, teacher, LabelMode::Priority, Objective::Contrastive, cfg.loss.temperature,
                           cfg.priority);
  const TokenizedCorpus toks = tokenize_corpus(student.vocab, corpus);
  double sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin + batch_size <= corpus.size(); begin += batch_size) {
    std::vector<std::size_t> rows(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) rows[i] = begin + i;
    const auto src = encode_batch(student, gather_tokens(toks.src, rows));
    const auto tgt = encode_batch(student, gather_tokens(toks.tgt, rows));
    const auto& a = view == AgreementView::MonoTarget ? tgt : src;
    const auto& b = view == AgreementView::MonoSource ? src : tgt;
    sum += teacher_agreement(scaled_similarity_matrix(a, b, cfg.loss.temperature), cache.labels(rows));
    ++batches;
  }
  return sum / static_cast<double>(batches);
}

nlohmann::ordered_json TrainHistory::to_json() const {
  nlohmann::ordered_json j;
  j["initial_loss"] = initial_loss;
  j["initial_valid_acc_avg"] = initial_valid_acc_avg;
  j["best_epoch"] = best_epoch;
  j["stopped_early"] = stopped_early;
  auto& arr = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    nlohmann::ordered_json r;
    r["epoch"] = e.epoch;
    r["steps"] = e.steps;
    r["lr"] = e.lr;
    r["loss"] = e.loss;
    r["l_row"] = e.l_row;
    r["l_col"] = e.l_col;
    r["l_cross"] = e.l_cross;
    r["l_mono"] = e.l_mono;
    r["valid_acc_src2tgt"] = e.valid_acc_src2tgt;
    r["valid_acc_tgt2src"] = e.valid_acc_tgt2src;
    r["valid_acc_avg"] = e.valid_acc_avg;
    arr.push_back(std::move(r));
  }
  return j;
}

}  // namespace softcl
