#pragma once

// Independent reference computations used only by the test suites.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "dcnas/dataset.hpp"

namespace dcnas::oracle {

// Sylvester doubling H_{2m} = [[H, H], [H, -H]] starting from H_1 = [1].
inline std::vector<std::vector<int>> sylvester(std::size_t order) {
  std::vector<std::vector<int>> h{{1}};
  while (h.size() < order) {
    const std::size_t m = h.size();
    std::vector<std::vector<int>> next(2 * m, std::vector<int>(2 * m));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        next[i][j] = h[i][j];
        next[i][j + m] = h[i][j];
        next[i + m][j] = h[i][j];
        next[i + m][j + m] = -h[i][j];
      }
    h = std::move(next);
  }
  return h;
}

struct PlainUpdate {
  std::vector<double> delta;
  std::vector<int> mask;
  std::size_t n_samples;
};

// out[i] = base[i] + sum over clients covering i of (N_c / N) * delta_c[i].
inline std::vector<double> brute_force_aggregate(const std::vector<double>& base,
                                                 const std::vector<PlainUpdate>& updates, std::size_t n_total) {
  std::vector<double> out = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    long double acc = 0.0L;
    bool any = false;
    for (const auto& u : updates) {
      if (!u.mask[i]) continue;
      any = true;
      acc += static_cast<long double>(u.n_samples) / static_cast<long double>(n_total) *
             static_cast<long double>(u.delta[i]);
    }
    if (any) out[i] = static_cast<double>(static_cast<long double>(base[i]) + acc);
  }
  return out;
}

// Multinomial logistic regression trained by full-batch gradient descent.
inline double linear_baseline_accuracy(const Dataset& ds, std::size_t epochs = 2000, double lr = 0.5) {
  const auto& train = ds.split("train");
  const auto& test = ds.split("test");
  const std::size_t d = ds.dim, K = ds.class_count;
  std::vector<double> W(K * (d + 1), 0.0);
  auto scores = [&](std::size_t i, std::vector<double>& s) {
    const auto x = ds.row(i);
    for (std::size_t k = 0; k < K; ++k) {
      double acc = W[k * (d + 1) + d];
      for (std::size_t j = 0; j < d; ++j) acc += W[k * (d + 1) + j] * x[j];
      s[k] = acc;
    }
  };
  std::vector<double> s(K), g(W.size());
  for (std::size_t it = 0; it < epochs; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i : train) {
      scores(i, s);
      double top = s[0];
      for (double v : s) top = std::max(top, v);
      double z = 0.0;
      for (double& v : s) z += (v = std::exp(v - top));
      const auto x = ds.row(i);
      for (std::size_t k = 0; k < K; ++k) {
        const double r = s[k] / z - (static_cast<int>(k) == ds.labels[i] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < d; ++j) g[k * (d + 1) + j] += r * x[j];
        g[k * (d + 1) + d] += r;
      }
    }
    for (std::size_t q = 0; q < W.size(); ++q) W[q] -= lr * g[q] / static_cast<double>(train.size());
  }
  std::size_t correct = 0;
  for (std::size_t i : test) {
    scores(i, s);
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (s[k] > s[best]) best = k;
    correct += static_cast<int>(best) == ds.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace dcnas::oracle
