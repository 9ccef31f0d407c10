#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "dml/error.hpp"
#include "dml/matrix.hpp"

namespace dml {

enum class Metric { euclidean, cosine };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

/// n x d matrix of finite embeddings, one sample per row. Row index is the
/// sample identity.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  explicit EmbeddingSet(Matrix data);

  std::size_t n() const noexcept { return data_.rows(); }
  std::size_t d() const noexcept { return data_.cols(); }
  const Matrix& data() const noexcept { return data_; }
  std::span<const double> row(std::size_t i) const { return data_.row(i); }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;

 private:
  Matrix data_;
};

/// Class id per sample. Ids need not be contiguous; `canonical()` maps them
/// onto 0..num_classes()-1 in ascending id order.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<int> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  int operator[](std::size_t i) const { return labels_[i]; }
  std::span<const int> ids() const noexcept { return labels_; }

  /// Sorted distinct class ids.
  const std::vector<int>& classes() const noexcept { return classes_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  /// Per-sample canonical index in 0..num_classes()-1.
  const std::vector<int>& canonical() const noexcept { return canonical_; }
  int canonical_of(int class_id) const;

  friend bool operator==(const LabelSet& a, const LabelSet& b) { return a.labels_ == b.labels_; }

 private:
  std::vector<int> labels_;
  std::vector<int> classes_;
  std::vector<int> canonical_;
  std::map<int, int> index_;
};

struct DistanceMatrix {
  Matrix values;
  Metric metric = Metric::euclidean;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Per-query neighbor lists, ascending by distance, ties by reference index.
struct NeighborRanking {
  std::vector<std::vector<Neighbor>> lists;
  bool self_excluded = false;
};

inline constexpr double kNormEpsilon = 1e-12;

EmbeddingSet l2_normalize(const EmbeddingSet& e, double eps = kNormEpsilon);

DistanceMatrix pairwise_distances(const EmbeddingSet& q, const EmbeddingSet& r,
                                  Metric metric = Metric::euclidean);

/// Exact k nearest references for every query. With `exclude_self`, query i
/// and reference i are the same sample (requires q.n() == r.n()).
NeighborRanking knn(const EmbeddingSet& q, const EmbeddingSet& r, std::size_t k, bool exclude_self,
                    Metric metric = Metric::euclidean);

/// Mean-centres and projects onto the top `target_dim` principal directions.
EmbeddingSet pca_reduce(const EmbeddingSet& e, std::size_t target_dim);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues descending; eigenvectors are the columns of `vectors`.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};
SymmetricEigen symmetric_eigen(const Matrix& a, int max_sweeps = 100);

/// Row-wise concatenation [a | b | ...]; all parts must have equal n.
EmbeddingSet concat_columns(std::span<const EmbeddingSet> parts);

}  // namespace dml
