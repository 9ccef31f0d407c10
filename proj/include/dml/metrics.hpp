#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "dml/embedcore.hpp"

namespace dml {

/// Retrieval accuracy plus, optionally, clustering scores. Fractions in [0,1].
struct MetricReport {
  double p_at_1 = 0.0;
  double r_precision = 0.0;
  double map_at_r = 0.0;
  std::optional<double> nmi;
  std::optional<double> ami;
  std::optional<double> f1;
  std::uint64_t n_queries_evaluated = 0;
  std::uint64_t n_queries_skipped = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

// Ranking-based metrics. `query_labels[i]` is the class of query i and
// `ref_labels[j]` the class of reference j. For a self-excluded ranking the
// queries are the references, so R excludes the query itself.

/// Recall@K convention: fraction of queries with a correct neighbour in the
/// top k. k = 1 gives Precision@1. Queries with R = 0 count as misses.
double precision_at_k(const NeighborRanking& ranking, std::span<const int> query_labels,
                      std::span<const int> ref_labels, std::size_t k = 1);

/// Mean r/R over queries with R >= 1.
double r_precision(const NeighborRanking& ranking, std::span<const int> query_labels,
                   std::span<const int> ref_labels);

/// Mean over queries with R >= 1 of (1/R) * sum_{i<=R} P(i), where P(i) is
/// the precision at i when the i-th retrieval is correct and 0 otherwise.
double map_at_r(const NeighborRanking& ranking, std::span<const int> query_labels,
                std::span<const int> ref_labels);

/// Number of same-class references per query (R).
std::vector<std::size_t> same_class_counts(const NeighborRanking& ranking, std::span<const int> query_labels,
                                           std::span<const int> ref_labels);

/// P@1, R-precision and MAP@R with queries = references = `e`, self excluded.
MetricReport evaluate_retrieval(const EmbeddingSet& e, const LabelSet& labels, Metric metric = Metric::euclidean);

/// Same result computed with the serial reference kernel.
MetricReport evaluate_retrieval_serial(const EmbeddingSet& e, const LabelSet& labels,
                                       Metric metric = Metric::euclidean);

struct ClusterAssignment {
  std::vector<int> cluster;
  std::size_t k = 0;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after every Lloyd iteration
  int iterations = 0;
};

struct KMeansOptions {
  int max_iterations = 300;
  double relative_tolerance = 1e-7;
};

/// Lloyd's algorithm with k-means++ seeding. Deterministic given `seed`.
ClusterAssignment kmeans(const EmbeddingSet& e, std::size_t k, std::uint64_t seed, const KMeansOptions& opts = {});

struct ClusterQuality {
  double nmi = 0.0;
  double ami = 0.0;
  double f1 = 0.0;
};

/// NMI (geometric-mean normalisation), AMI (arithmetic-mean normalisation,
/// hypergeometric expected MI, clamped to [0,1]) and the pairwise F-measure.
ClusterQuality cluster_quality(std::span<const int> clusters, std::span<const int> labels);

/// k-means with k = number of classes, then cluster_quality.
ClusterQuality clustering_scores(const EmbeddingSet& e, const LabelSet& labels, std::uint64_t seed);

/// Pearson correlation of (x_1..x_{T-1}) with (x_2..x_T).
double lag_one_autocorrelation(std::span<const double> series);

}  // namespace dml
