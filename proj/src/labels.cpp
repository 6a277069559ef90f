#include "softcl/labels.hpp"

#include <algorithm>
#include <cmath>

#include "softcl/errors.hpp"

namespace softcl {

std::string_view to_string(LabelMode mode) {
  switch (mode) {
    case LabelMode::Hard:
      return "hard";
    case LabelMode::Priority:
      return "priority";
    case LabelMode::Average:
      return "average";
  }
  return "unknown";
}

LabelMode parse_label_mode(std::string_view text) {
  if (text == "hard") return LabelMode::Hard;
  if (text == "priority") return LabelMode::Priority;
  if (text == "average") return LabelMode::Average;
  throw ConfigError("unknown label mode '" + std::string(text) + "' (expected hard, priority or average)");
}

LanguagePriority::LanguagePriority(std::vector<Language> order) : order_(std::move(order)) {
  if (order_.empty()) {
    throw ConfigError("language priority list is empty");
  }
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (order_[i].empty()) {
      throw ConfigError("language priority list contains an empty language id");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (order_[i] == order_[j]) {
        throw ConfigError("language priority list repeats '" + order_[i] + "'");
      }
    }
  }
}

LanguagePriority LanguagePriority::defaults() {
  return LanguagePriority({"en", "ru", "ja", "fr", "ko"});
}

LanguagePriority LanguagePriority::parse(std::string_view csv) {
  std::vector<Language> langs;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t end = csv.find(',', start);
    if (end == std::string_view::npos) {
      end = csv.size();
    }
    std::string_view item = csv.substr(start, end - start);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    langs.emplace_back(item);
    start = end + 1;
  }
  return LanguagePriority(std::move(langs));
}

std::optional<std::size_t> LanguagePriority::rank(std::string_view lang) const {
  auto it = std::find(order_.begin(), order_.end(), lang);
  if (it == order_.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - order_.begin());
}

std::string LanguagePriority::to_csv() const {
  std::string out;
  for (const auto& lang : order_) {
    if (!out.empty()) out += ',';
    out += lang;
  }
  return out;
}

LabelMatrix hard_labels(std::size_t n) {
  if (n == 0) {
    throw DomainError("hard_labels: batch size must be at least 1");
  }
  return {Matrix::identity(n), LabelMode::Hard};
}

Language select_anchor(std::string_view lang_a, std::string_view lang_b,
                       const LanguagePriority& priority) {
  if (lang_a == lang_b) {
    throw DomainError("select_anchor: language pair must differ, got '" + std::string(lang_a) + "' twice");
  }
  const auto ra = priority.rank(lang_a);
  const auto rb = priority.rank(lang_b);
  if (!ra) {
    throw DomainError("select_anchor: language '" + std::string(lang_a) + "' is not in the priority list");
  }
  if (!rb) {
    throw DomainError("select_anchor: language '" + std::string(lang_b) + "' is not in the priority list");
  }
  return Language(*ra < *rb ? lang_a : lang_b);
}

LabelMatrix priority_labels(const EmbeddingMatrix& anchor_teacher, double temperature) {
  const auto sim = scaled_similarity_matrix(anchor_teacher, anchor_teacher, temperature);
  return {row_softmax(sim.values), LabelMode::Priority};
}

LabelMatrix average_labels(const SimilarityMatrix& src_sim, const SimilarityMatrix& tgt_sim) {
  if (src_sim.values.rows() != tgt_sim.values.rows() || src_sim.values.cols() != tgt_sim.values.cols()) {
    throw ShapeError("average_labels: similarity matrices differ in shape");
  }
  Matrix mean = src_sim.values;
  mean += tgt_sim.values;
  mean *= 0.5;
  return {row_softmax(mean), LabelMode::Average};
}

LabelMatrix average_labels(const EmbeddingMatrix& src_teacher, const EmbeddingMatrix& tgt_teacher,
                           double temperature) {
  if (src_teacher.rows() != tgt_teacher.rows() || src_teacher.cols() != tgt_teacher.cols()) {
    throw ShapeError("average_labels: source and target teacher embeddings differ in shape");
  }
  return average_labels(scaled_similarity_matrix(src_teacher, src_teacher, temperature),
                        scaled_similarity_matrix(tgt_teacher, tgt_teacher, temperature));
}

double max_row_sum_error(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace softcl
