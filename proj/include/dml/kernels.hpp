#pragma once

// Data-parallel kernels. Each kernel has a straightforward serial reference
// in `kernels::serial` and an OpenMP version in `kernels::omp`; the public
// API routes to `omp`. Both versions evaluate every distance with the same
// scalar expression in the same summation order, so their outputs are
// bitwise identical. Tests rely on that.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dml/embedcore.hpp"

namespace dml::kernels {

inline double euclidean_from_parts(double qq, double rr, double qr) {
  const double sq = qq + rr - 2.0 * qr;
  return sq > 0.0 ? std::sqrt(sq) : 0.0;
}

inline double cosine_from_parts(double qq, double rr, double qr) {
  const double c = qr / (std::sqrt(qq) * std::sqrt(rr));
  const double d = 1.0 - c;
  return d < 0.0 ? 0.0 : (d > 2.0 ? 2.0 : d);
}

inline double distance_from_parts(Metric metric, double qq, double rr, double qr) {
  return metric == Metric::euclidean ? euclidean_from_parts(qq, rr, qr) : cosine_from_parts(qq, rr, qr);
}

std::vector<double> row_squared_norms(const Matrix& m);

/// Per-query retrieval outcome when queries are the reference set itself.
struct QueryScore {
  std::size_t same_class_refs = 0;  // R
  bool first_correct = false;       // nearest neighbour shares the class
  std::size_t correct_in_r = 0;     // r
  double average_precision = 0.0;   // (1/R) sum_i P(i), 0 when R == 0
};

/// Nearest-centroid assignment for k-means.
struct Assignment {
  std::vector<int> cluster;
  std::vector<double> squared_distance;
};

namespace serial {
void distance_matrix(const Matrix& q, const Matrix& r, Metric metric, bool same_set, Matrix& out);
std::vector<std::vector<Neighbor>> knn(const Matrix& q, const Matrix& r, std::size_t k, bool exclude_self,
                                       bool same_set, Metric metric);
std::vector<QueryScore> retrieval_scores(const Matrix& e, std::span<const int> labels, Metric metric);
Assignment assign_nearest(const Matrix& points, const Matrix& centroids);
}  // namespace serial

namespace omp {
void distance_matrix(const Matrix& q, const Matrix& r, Metric metric, bool same_set, Matrix& out);
std::vector<std::vector<Neighbor>> knn(const Matrix& q, const Matrix& r, std::size_t k, bool exclude_self,
                                       bool same_set, Metric metric);
std::vector<QueryScore> retrieval_scores(const Matrix& e, std::span<const int> labels, Metric metric);
Assignment assign_nearest(const Matrix& points, const Matrix& centroids);
}  // namespace omp

/// Scores one query given its ranked neighbour labels (length >= max(R, 1)).
QueryScore score_query(std::size_t same_class_refs, int query_label, std::span<const Neighbor> ranked,
                       std::span<const int> ref_labels);

}  // namespace dml::kernels
