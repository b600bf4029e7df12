#pragma once

// Independent reference computations for the unit and acceptance tests. Plain
// loops over std::vector; nothing here calls into the library's ops.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline double phi(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double gelu(double x) { return x * phi(x); }

// x[T][D] through attention with explicit per-head, per-element loops.
// Weights are [in][out]; biases length D.
struct AttentionWeights {
  Matrix wq, wk, wv, wo;
  std::vector<double> bq, bk, bv, bo;
};

inline Matrix attention(const Matrix& x, const AttentionWeights& w, std::size_t heads, bool causal) {
  const std::size_t t = x.size(), d = x[0].size(), hd = d / heads;
  auto project = [&](const Matrix& wm, const std::vector<double>& b) {
    Matrix out(t, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = b[j];
        for (std::size_t k = 0; k < d; ++k) s += x[i][k] * wm[k][j];
        out[i][j] = s;
      }
    return out;
  };
  const Matrix q = project(w.wq, w.bq), k = project(w.wk, w.bk), v = project(w.wv, w.bv);
  Matrix merged(t, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> score(t, -1e300);
      double mx = -1e300;
      for (std::size_t j = 0; j < t; ++j) {
        if (causal && j > i) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += q[i][h * hd + c] * k[j][h * hd + c];
        score[j] = s / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, score[j]);
      }
      double z = 0.0;
      std::vector<double> p(t, 0.0);
      for (std::size_t j = 0; j < t; ++j) {
        if (causal && j > i) continue;
        p[j] = std::exp(score[j] - mx);
        z += p[j];
      }
      for (std::size_t c = 0; c < hd; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < t; ++j) s += p[j] / z * v[j][h * hd + c];
        merged[i][h * hd + c] = s;
      }
    }
  }
  Matrix out(t, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = w.bo[j];
      for (std::size_t k = 0; k < d; ++k) s += merged[i][k] * w.wo[k][j];
      out[i][j] = s;
    }
  return out;
}

// Mann-Whitney statistic by exhaustive pair comparison, ties credited 1/2.
// Returned as an exact ratio numerator/denominator in double.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long twice_wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) twice_wins += 2;
      else if (scores[i] == scores[j]) twice_wins += 1;
    }
  }
  return static_cast<double>(twice_wins) / static_cast<double>(2 * pairs);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace oracle
