#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "xencdec/evaluation.hpp"

namespace xencdec::testing {

// Direct transcription of the three clustering definitions.
inline ClusteringMetrics brute_clustering(const std::vector<std::vector<double>>& x, const std::vector<std::int64_t>& y) {
  const std::size_t n = x.size();
  auto dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  };
  std::vector<std::int64_t> labels = y;
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const std::size_t k = labels.size();
  std::vector<std::vector<double>> cent(k, std::vector<double>(x[0].size(), 0.0));
  std::vector<double> count(k, 0.0), mean(x[0].size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), y[i]) - labels.begin());
    count[c] += 1;
    for (std::size_t q = 0; q < x[i].size(); ++q) {
      cent[c][q] += x[i][q];
      mean[q] += x[i][q] / static_cast<double>(n);
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (auto& v : cent[c]) v /= count[c];
  ClusteringMetrics m;
  for (std::size_t i = 0; i < n; ++i) {
    double a = 0, na = 0, b = 1e300;
    for (std::int64_t other : labels) {
      double s = 0, cnt = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && y[j] == other) {
          s += dist(x[i], x[j]);
          cnt += 1;
        }
      if (other == y[i]) {
        a = s;
        na = cnt;
      } else {
        b = std::min(b, s / cnt);
      }
    }
    a /= na;
    m.silhouette += (b - a) / std::max(a, b) / static_cast<double>(n);
  }
  double between = 0, within = 0;
  for (std::size_t c = 0; c < k; ++c) between += count[c] * std::pow(dist(cent[c], mean), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), y[i]) - labels.begin());
    within += std::pow(dist(x[i], cent[c]), 2);
  }
  m.calinski_harabasz = (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
  std::vector<double> spread(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), y[i]) - labels.begin());
    spread[c] += dist(x[i], cent[c]) / count[c];
  }
  for (std::size_t a = 0; a < k; ++a) {
    double worst = 0;
    for (std::size_t b = 0; b < k; ++b)
      if (a != b) worst = std::max(worst, (spread[a] + spread[b]) / dist(cent[a], cent[b]));
    m.davies_bouldin += worst / static_cast<double>(k);
  }
  return m;
}

inline Matrix to_matrix(const std::vector<std::vector<double>>& x) {
  Matrix m{x.size(), x[0].size(), {}};
  for (const auto& r : x) m.values.insert(m.values.end(), r.begin(), r.end());
  return m;
}

inline const std::vector<std::vector<double>> kSix{{0, 0}, {1, 0}, {0, 1.5}, {5, 5}, {6, 5.5}, {5.2, 7}};
inline const std::vector<std::int64_t> kSixLabels{0, 0, 0, 1, 1, 1};
inline const std::vector<std::vector<double>> kEight{{0, 0}, {1, 0}, {0, 1.5}, {3, 1}, {4, 0.5}, {3.2, 2}, {1, 4}, {2, 5}};
inline const std::vector<std::int64_t> kEightLabels{0, 0, 0, 1, 1, 1, 2, 2};

}  // namespace xencdec::testing
