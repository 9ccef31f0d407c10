#pragma once

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "dml/losses.hpp"

namespace dml::detail {

using IndexPair = std::pair<std::size_t, std::size_t>;

struct PairSets {
  std::vector<IndexPair> positives;
  std::vector<IndexPair> negatives;
};

// b >= 2, one label per row, finite entries.
void check_batch(const Batch& b);

// Every ordered (a, j), a != j, split by label agreement; or the mined set.
PairSets pair_sets(const Batch& b, const MinedTuples* mined);

// Every valid (a, p, n); or the mined set.
std::vector<std::array<std::size_t, 3>> triplet_set(const Batch& b, const MinedTuples* mined);

// log(sum exp(z)) with max subtraction. Empty input gives -inf.
double log_sum_exp(std::span<const double> z);

inline double row_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// g_a += c * (x_a - x_j) / d and g_j -= the same; no-op at d == 0.
void add_distance_grad(const Matrix& x, std::size_t a, std::size_t j, double d, double c, Matrix& g);

}  // namespace dml::detail
