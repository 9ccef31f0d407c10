#include <algorithm>
#include <limits>

#include "dml/kernels.hpp"

namespace dml::kernels {

namespace {
bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}
}  // namespace

std::vector<double> row_squared_norms(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = squared_norm(m.row(i));
  return out;
}

QueryScore score_query(std::size_t same_class_refs, int query_label, std::span<const Neighbor> ranked,
                       std::span<const int> ref_labels) {
  QueryScore s;
  s.same_class_refs = same_class_refs;
  if (!ranked.empty()) s.first_correct = ref_labels[ranked[0].index] == query_label;
  if (same_class_refs == 0) return s;
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < same_class_refs; ++i) {
    if (ref_labels[ranked[i].index] == query_label) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  s.correct_in_r = hits;
  s.average_precision = sum / static_cast<double>(same_class_refs);
  return s;
}

namespace serial {

void distance_matrix(const Matrix& q, const Matrix& r, Metric metric, bool same_set, Matrix& out) {
  const auto qn = row_squared_norms(q);
  const auto rn = row_squared_norms(r);
  out = Matrix(q.rows(), r.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < r.rows(); ++j) {
      out(i, j) = (same_set && i == j) ? 0.0 : distance_from_parts(metric, qn[i], rn[j], dot(q.row(i), r.row(j)));
    }
  }
}

std::vector<std::vector<Neighbor>> knn(const Matrix& q, const Matrix& r, std::size_t k, bool exclude_self,
                                       bool same_set, Metric metric) {
  const auto qn = row_squared_norms(q);
  const auto rn = row_squared_norms(r);
  std::vector<std::vector<Neighbor>> out(q.rows());
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    all.clear();
    for (std::size_t j = 0; j < r.rows(); ++j) {
      if (exclude_self && i == j) continue;
      const double d = (same_set && i == j) ? 0.0 : distance_from_parts(metric, qn[i], rn[j], dot(q.row(i), r.row(j)));
      all.push_back({j, d});
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    out[i].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

std::vector<QueryScore> retrieval_scores(const Matrix& e, std::span<const int> labels, Metric metric) {
  const std::size_t n = e.rows();
  const auto norms = row_squared_norms(e);
  std::vector<QueryScore> out(n);
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t same = 0;
    for (std::size_t j = 0; j < n; ++j) same += (j != i && labels[j] == labels[i]);
    if (n < 2) continue;
    all.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      all.push_back({j, distance_from_parts(metric, norms[i], norms[j], dot(e.row(i), e.row(j)))});
    }
    const std::size_t k = std::max<std::size_t>(same, 1);
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    out[i] = score_query(same, labels[i], std::span<const Neighbor>(all.data(), k), labels);
  }
  return out;
}

Assignment assign_nearest(const Matrix& points, const Matrix& centroids) {
  Assignment a;
  a.cluster.assign(points.rows(), 0);
  a.squared_distance.assign(points.rows(), 0.0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    const auto p = points.row(i);
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const auto m = centroids.row(c);
      double d2 = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double diff = p[k] - m[k];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        best_c = static_cast<int>(c);
      }
    }
    a.cluster[i] = best_c;
    a.squared_distance[i] = best;
  }
  return a;
}

}  // namespace serial
}  // namespace dml::kernels
