#pragma once

// Reference implementations used only by the tests. They are written
// from the formulas with plain loops and share no code with the library
// beyond the Matrix container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "softcl/matrix.hpp"

namespace oracle {

using softcl::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = dist(gen);
  return m;
}

inline double dot(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
  return s;
}

inline double cos_rows(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  return dot(a, i, b, j) / std::sqrt(dot(a, i, a, i) * dot(b, j, b, j));
}

inline Matrix cos_matrix(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = cos_rows(a, i, b, j);
  return c;
}

inline double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Symmetric InfoNCE with in-batch negatives: mean over i of
/// -log softmax over targets at (i, i) plus the same over sources.
inline double infonce(const Matrix& src, const Matrix& tgt, double tau) {
  const std::size_t n = src.rows();
  double row = 0.0;
  double col = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r;
    std::vector<double> c;
    for (std::size_t j = 0; j < n; ++j) {
      r.push_back(cos_rows(src, i, tgt, j) / tau);
      c.push_back(cos_rows(src, j, tgt, i) / tau);
    }
    row += log_sum_exp(r) - cos_rows(src, i, tgt, i) / tau;
    col += log_sum_exp(c) - cos_rows(src, i, tgt, i) / tau;
  }
  return (row + col) / static_cast<double>(n);
}

/// Soft-target cross-entropy over targets (row) for logits sim(a_i, b_j)/tau.
inline double soft_row_ce(const Matrix& a, const Matrix& b, const Matrix& w, double tau) {
  const std::size_t n = a.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r;
    for (std::size_t j = 0; j < n; ++j) r.push_back(cos_rows(a, i, b, j) / tau);
    const double lse = log_sum_exp(r);
    for (std::size_t j = 0; j < n; ++j) loss -= w(i, j) * (r[j] - lse);
  }
  return loss / static_cast<double>(n);
}

/// Soft-target cross-entropy over sources (column) for logits sim(a_i, b_j)/tau.
inline double soft_col_ce(const Matrix& a, const Matrix& b, const Matrix& w, double tau) {
  const std::size_t n = a.rows();
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> c;
    for (std::size_t i = 0; i < n; ++i) c.push_back(cos_rows(a, i, b, j) / tau);
    const double lse = log_sum_exp(c);
    for (std::size_t i = 0; i < n; ++i) loss -= w(i, j) * (c[i] - lse);
  }
  return loss / static_cast<double>(n);
}

/// Row-wise softmax of logits x_ij / tau computed from scratch.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::vector<double> r(logits.row(i).begin(), logits.row(i).end());
    const double lse = log_sum_exp(r);
    for (std::size_t j = 0; j < logits.cols(); ++j) p(i, j) = std::exp(r[j] - lse);
  }
  return p;
}

/// Central finite differences of f with respect to every entry of x.
inline Matrix finite_difference(const std::function<double()>& f, Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double keep = x(i, j);
      x(i, j) = keep + h;
      const double up = f();
      x(i, j) = keep - h;
      const double down = f();
      x(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||) in the Frobenius norm; 0 when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      diff += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
      na += a(i, j) * a(i, j);
      nb += b(i, j) * b(i, j);
    }
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Largest |a - b| / max(|a|, |b|) over entries where max(|a|, |b|) > floor.
inline double max_elementwise_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double scale = std::max(std::abs(a(i, j)), std::abs(b(i, j)));
      if (scale > floor) worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
    }
  }
  return worst;
}

struct Retrieval {
  std::size_t src2tgt_hits = 0;
  std::size_t tgt2src_hits = 0;
};

inline Retrieval retrieval(const Matrix& src, const Matrix& tgt, const std::vector<std::size_t>& gold) {
  const std::size_t n = src.rows();
  Retrieval r;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (cos_rows(src, i, tgt, j) > cos_rows(src, i, tgt, best)) best = j;
    if (best == gold[i]) ++r.src2tgt_hits;
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (cos_rows(src, i, tgt, j) > cos_rows(src, best, tgt, j)) best = i;
    if (gold[best] == j) ++r.tgt2src_hits;
  }
  return r;
}

/// Number of sources whose best margin-scored target is wrong.
inline std::size_t xsim_errors(const Matrix& src, const Matrix& tgt, const std::vector<std::size_t>& gold,
                               std::size_t k, bool ratio) {
  const std::size_t n = src.rows();
  k = std::min(k, n - 1);
  auto knn = [&](bool from_src, std::size_t idx) {
    std::vector<double> c;
    for (std::size_t o = 0; o < n; ++o) c.push_back(from_src ? cos_rows(src, idx, tgt, o) : cos_rows(src, o, tgt, idx));
    std::sort(c.begin(), c.end(), [](double a, double b) { return a > b; });
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += c[t];
    return s / static_cast<double>(k);
  };
  std::size_t errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto score = [&](std::size_t j) {
      const double c = cos_rows(src, i, tgt, j);
      return ratio ? c / (knn(true, i) / 2.0 + knn(false, j) / 2.0) : c;
    };
    std::size_t best = 0;
    double best_s = score(0);
    for (std::size_t j = 1; j < n; ++j) {
      const double s = score(j);
      if (s > best_s) {
        best = j;
        best_s = s;
      }
    }
    if (best != gold[i]) ++errors;
  }
  return errors;
}

/// Rank of x_i = 1 + (#values below) + (#ties excluding itself) / 2.
inline std::vector<double> tied_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double below = 0.0;
    double equal = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) below += 1.0;
      else if (x[j] == x[i] && j != i) equal += 1.0;
    }
    r[i] = 1.0 + below + equal / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(tied_ranks(a), tied_ranks(b));
}

/// Element-wise AdamW with bias correction and decoupled decay.
struct ScalarAdamW {
  double m = 0.0;
  double v = 0.0;
  int t = 0;

  double step(double p, double g, double lr, double b1, double b2, double eps, double wd) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mh = m / (1.0 - std::pow(b1, t));
    const double vh = v / (1.0 - std::pow(b2, t));
    return p - lr * wd * p - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace oracle
