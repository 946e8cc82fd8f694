#pragma once

// Test-side reference implementations. Plain loops over std::vector, no
// Eigen and no tape, so they share nothing with the code under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "hermes/tensor.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const hermes::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.size();
  const std::size_t k = b.empty() ? 0 : b.size();
  const std::size_t m = b.empty() ? 0 : b[0].size();
  Matrix out(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i][p] * b[p][j];
      out[i][j] = s;
    }
  }
  return out;
}

inline double max_abs_diff(const Matrix& a, const hermes::Tensor& t) {
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::fabs(a[r][c] - t.at(r, c)));
  }
  return worst;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// P_ij = (1/d_i) sum_e H_ie H_je / delta_e, term by term.
inline Matrix propagation(const Matrix& h) {
  const std::size_t n = h.size();
  const std::size_t m = n == 0 ? 0 : h[0].size();
  std::vector<double> d(n, 0.0), e(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      d[i] += h[i][j];
      e[j] += h[i][j];
    }
  }
  Matrix p(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] == 0.0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (e[j] == 0.0) continue;
        s += h[i][j] * h[k][j] / e[j];
      }
      p[i][k] = s / d[i];
    }
  }
  return p;
}

enum class Residual { gated, plain, none };

// One hypergraph layer with ReLU convolution; b_gate is a row vector.
inline Matrix hgnn_layer(const Matrix& p, const Matrix& x, const Matrix& w_conv,
                         const Matrix& w_gate, const std::vector<double>& b_gate, Residual mode) {
  Matrix c = multiply(multiply(p, x), w_conv);
  for (auto& row : c) {
    for (double& v : row) v = std::max(0.0, v);
  }
  if (mode == Residual::none) return c;
  Matrix out = x;
  if (mode == Residual::plain) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x[i].size(); ++j) out[i][j] += c[i][j];
    }
    return out;
  }
  const Matrix z = multiply(c, w_gate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x[i].size(); ++j) out[i][j] += sigmoid(z[i][j] + b_gate[j]) * x[i][j];
  }
  return out;
}

// Graph attention for one layer: per head, softmax over the neighbour set of
// (q_i . k_j)/sqrt(d), computed pair by pair; ReLU on self + message.
inline Matrix gtn_layer(const Matrix& a, const Matrix& adj, const Matrix& w_self,
                        const Matrix& w_value, const Matrix& w_query, const Matrix& w_key,
                        std::size_t heads, std::size_t d, bool uniform,
                        std::vector<Matrix>* alpha_out = nullptr) {
  const std::size_t n = a.size();
  const Matrix self = multiply(a, w_self);
  const Matrix v = multiply(a, w_value);
  const Matrix q = multiply(a, w_query);
  const Matrix k = multiply(a, w_key);
  Matrix out = self;
  if (alpha_out) alpha_out->assign(heads, Matrix(n, std::vector<double>(n, 0.0)));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n, -INFINITY);
      double top = -INFINITY;
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (adj[i][j] == 0.0) continue;
        ++count;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += q[i][h * d + c] * k[j][h * d + c];
        logits[j] = uniform ? 0.0 : s / std::sqrt(static_cast<double>(d));
        top = std::max(top, logits[j]);
      }
      if (count == 0) continue;
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (adj[i][j] != 0.0) z += std::exp(logits[j] - top);
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (adj[i][j] == 0.0) continue;
        const double alpha = std::exp(logits[j] - top) / z;
        if (alpha_out) (*alpha_out)[h][i][j] = alpha;
        for (std::size_t c = 0; c < d; ++c) out[i][h * d + c] += alpha * v[j][h * d + c];
      }
    }
  }
  for (auto& row : out) {
    for (double& x : row) x = std::max(0.0, x);
  }
  return out;
}

inline Matrix dense_layer(const Matrix& x, const Matrix& w, const std::vector<double>& b,
                          hermes::Activation act) {
  Matrix out = multiply(x, w);
  for (auto& row : out) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      double v = row[j] + b[j];
      if (act == hermes::Activation::relu) v = std::max(0.0, v);
      if (act == hermes::Activation::sigmoid) v = sigmoid(v);
      if (act == hermes::Activation::tanh) v = std::tanh(v);
      row[j] = v;
    }
  }
  return out;
}

// Mann-Whitney concordance over every positive/negative pair.
inline double auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Average precision from a sweep over every distinct threshold, counting
// predictions with a full pass per threshold.
inline double auprc(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double positives = 0.0;
  for (int v : y) positives += v;
  double ap = 0.0;
  double previous_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp) += 1.0;
    }
    const double recall = tp / positives;
    ap += (recall - previous_recall) * (tp / (tp + fp));
    previous_recall = recall;
  }
  return ap;
}

}  // namespace oracle
