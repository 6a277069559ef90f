#include "softcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "softcl/errors.hpp"

namespace softcl {

namespace {

void check_bitext_shapes(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt) {
  validate_embeddings(src, "source embeddings");
  validate_embeddings(tgt, "target embeddings");
  if (src.rows() != tgt.rows() || src.cols() != tgt.cols()) {
    throw ShapeError("source and target embeddings differ in shape: " + std::to_string(src.rows()) + "x" +
                     std::to_string(src.cols()) + " vs " + std::to_string(tgt.rows()) + "x" +
                     std::to_string(tgt.cols()));
  }
}

// First index of the maximum of f(0..n-1); NaN never wins.
std::size_t argmax(std::size_t n, const std::function<double(std::size_t)>& f) {
  std::size_t best = 0;
  double best_v = -INFINITY;
  bool found = false;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = f(j);
    if (std::isnan(v)) continue;
    if (!found || v > best_v) {
      best = j;
      best_v = v;
      found = true;
    }
  }
  return best;
}

double mean_top_k(std::vector<double> values, std::size_t k) {
  std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end(),
                    std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += values[i];
  return s / static_cast<double>(k);
}

}  // namespace

void validate_alignment(std::span<const std::size_t> gold, std::size_t n) {
  if (gold.size() != n) {
    throw ShapeError("gold alignment has " + std::to_string(gold.size()) + " entries for " + std::to_string(n) +
                     " pairs");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (gold[i] >= n) {
      throw ShapeError("gold alignment index " + std::to_string(gold[i]) + " out of range");
    }
    if (seen[gold[i]]) {
      throw ShapeError("gold alignment is not a permutation (target " + std::to_string(gold[i]) + " repeated)");
    }
    seen[gold[i]] = true;
  }
}

std::vector<std::size_t> identity_alignment(std::size_t n) {
  std::vector<std::size_t> gold(n);
  std::iota(gold.begin(), gold.end(), std::size_t{0});
  return gold;
}

RetrievalAccuracy retrieval_accuracy(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                                     std::span<const std::size_t> gold) {
  check_bitext_shapes(src, tgt);
  const std::size_t n = src.rows();
  validate_alignment(gold, n);
  const Matrix cos = cosine_matrix(src, tgt);

  std::vector<std::size_t> inverse(n);
  for (std::size_t i = 0; i < n; ++i) inverse[gold[i]] = i;

  std::size_t fwd = 0;
  std::size_t bwd = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (argmax(n, [&](std::size_t j) { return cos(i, j); }) == gold[i]) ++fwd;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (argmax(n, [&](std::size_t i) { return cos(i, j); }) == inverse[j]) ++bwd;
  }
  RetrievalAccuracy acc;
  acc.src2tgt = static_cast<double>(fwd) / static_cast<double>(n);
  acc.tgt2src = static_cast<double>(bwd) / static_cast<double>(n);
  acc.avg = (acc.src2tgt + acc.tgt2src) / 2.0;
  return acc;
}

std::string_view to_string(MarginScoring scoring) {
  return scoring == MarginScoring::Ratio ? "ratio" : "cosine";
}

MarginScoring parse_margin_scoring(std::string_view text) {
  if (text == "ratio") return MarginScoring::Ratio;
  if (text == "cosine") return MarginScoring::Cosine;
  throw ConfigError("unknown margin mode '" + std::string(text) + "' (expected ratio or cosine)");
}

double xsim_error_rate(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt, std::span<const std::size_t> gold,
                       std::size_t k, MarginScoring scoring) {
  check_bitext_shapes(src, tgt);
  const std::size_t n = src.rows();
  if (n < 2) {
    throw DomainError("xsim_error_rate: need at least 2 sentences");
  }
  validate_alignment(gold, n);
  if (k == 0) {
    throw DomainError("xsim_error_rate: k must be positive");
  }
  k = std::min(k, n - 1);
  const Matrix cos = cosine_matrix(src, tgt);

  std::vector<double> knn_src(n);
  std::vector<double> knn_tgt(n);
  if (scoring == MarginScoring::Ratio) {
    std::vector<double> buf(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) buf[j] = cos(i, j);
      knn_src[i] = mean_top_k(buf, k);
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = cos(i, j);
      knn_tgt[j] = mean_top_k(buf, k);
    }
  }

  std::size_t errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t best = argmax(n, [&](std::size_t j) {
      if (scoring == MarginScoring::Cosine) return cos(i, j);
      return cos(i, j) / (knn_src[i] / 2.0 + knn_tgt[j] / 2.0);
    });
    if (best != gold[i]) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(n);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size()) {
    throw ShapeError("spearman: length mismatch (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(gold.size()) + ")");
  }
  if (pred.size() < 2) {
    throw DomainError("spearman: need at least 2 observations");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i]) || !std::isfinite(gold[i])) {
      throw NumericalError("spearman: non-finite input");
    }
  }
  const auto rp = average_ranks(pred);
  const auto rg = average_ranks(gold);
  const double n = static_cast<double>(rp.size());
  const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
  const double mg = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
  double cov = 0.0;
  double vp = 0.0;
  double vg = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    cov += (rp[i] - mp) * (rg[i] - mg);
    vp += (rp[i] - mp) * (rp[i] - mp);
    vg += (rg[i] - mg) * (rg[i] - mg);
  }
  if (vp == 0.0 || vg == 0.0) {
    throw DomainError("spearman: correlation is undefined for constant input");
  }
  return std::clamp(cov / std::sqrt(vp * vg), -1.0, 1.0);
}

std::vector<double> sts_predictions(const StudentEncoder& encoder, std::span<const StsRecord> records) {
  if (records.empty()) {
    throw DomainError("sts_eval: no records");
  }
  std::vector<std::string> a;
  std::vector<std::string> b;
  for (const auto& r : records) {
    a.push_back(r.sentence_a);
    b.push_back(r.sentence_b);
  }
  const auto ea = encode_texts(encoder, a);
  const auto eb = encode_texts(encoder, b);
  std::vector<double> pred(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) pred[i] = cosine(ea.row(i), eb.row(i));
  return pred;
}

double sts_eval(const StudentEncoder& encoder, std::span<const StsRecord> records) {
  const auto pred = sts_predictions(encoder, records);
  std::vector<double> gold;
  for (const auto& r : records) gold.push_back(r.gold);
  return spearman(pred, gold);
}

double teacher_agreement(const SimilarityMatrix& student_sim, const LabelMatrix& labels) {
  const std::size_t n = student_sim.values.rows();
  if (student_sim.values.cols() != n || labels.values.rows() != n || labels.values.cols() != n) {
    throw ShapeError("teacher_agreement: similarity and label matrices must both be N x N");
  }
  if (n < 3) {
    throw DomainError("teacher_agreement: need N >= 3");
  }
  const Matrix p = row_softmax(student_sim.values);
  std::vector<double> a;
  std::vector<double> b;
  a.reserve(n * (n - 1));
  b.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      a.push_back(p(i, j));
      b.push_back(labels.values(i, j));
    }
  }
  return spearman(a, b);
}

EvalReport evaluate_bitext(const EmbeddingMatrix& src, const EmbeddingMatrix& tgt,
                           std::span<const std::size_t> gold, std::size_t k, MarginScoring scoring) {
  EvalReport report;
  report.accuracy = retrieval_accuracy(src, tgt, gold);
  report.count = src.rows();
  report.scoring = scoring;
  report.k = src.rows() >= 2 ? std::min(k, src.rows() - 1) : k;
  if (src.rows() >= 2) {
    report.xsim_error = xsim_error_rate(src, tgt, gold, k, scoring);
  }
  return report;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["acc_src2tgt"] = accuracy.src2tgt;
  j["acc_tgt2src"] = accuracy.tgt2src;
  j["acc_avg"] = accuracy.avg;
  j["xsim_error"] = xsim_error ? nlohmann::ordered_json(*xsim_error) : nlohmann::ordered_json(nullptr);
  j["xsim_margin"] = std::string(to_string(scoring));
  j["xsim_k"] = k;
  j["spearman"] = spearman ? nlohmann::ordered_json(*spearman) : nlohmann::ordered_json(nullptr);
  j["count"] = count;
  return j;
}

}  // namespace softcl
