#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "dml/kernels.hpp"
#include "dml/metrics.hpp"
#include "oracles.hpp"
#include "toy_embeddings.hpp"

using namespace dml;
namespace dt = dml::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected dml::Error";
  return ErrorKind::IoError;
}

// One query of class 0 against 2R references (R of class 0, R of class 1).
// `correct_at` lists the 1-based ranks holding a class-0 reference.
struct SingleQuery {
  NeighborRanking ranking;
  std::vector<int> query_labels{0};
  std::vector<int> ref_labels;
};

SingleQuery single_query(std::size_t big_r, std::set<std::size_t> correct_at) {
  SingleQuery s;
  for (std::size_t j = 0; j < big_r; ++j) s.ref_labels.push_back(0);
  for (std::size_t j = 0; j < big_r; ++j) s.ref_labels.push_back(1);
  std::size_t next_pos = 0;
  std::size_t next_neg = big_r;
  std::vector<Neighbor> list;
  for (std::size_t rank = 1; rank <= 2 * big_r; ++rank) {
    const std::size_t idx = correct_at.count(rank) ? next_pos++ : next_neg++;
    list.push_back({idx, static_cast<double>(rank)});
  }
  s.ranking.lists.push_back(list);
  return s;
}

}  // namespace

TEST(RetrievalMetrics, HypotheticalRankingsWithTenRelevant) {
  struct Row {
    std::set<std::size_t> correct;
    double p1, rp, map;
  };
  const Row rows[] = {{{1}, 1.0, 0.10, 0.10},
                      {{1, 10}, 1.0, 0.20, 0.12},
                      {{1, 2}, 1.0, 0.20, 0.20},
                      {{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 1.0, 1.0, 1.0}};
  for (const auto& row : rows) {
    const auto q = single_query(10, row.correct);
    EXPECT_NEAR(precision_at_k(q.ranking, q.query_labels, q.ref_labels, 1), row.p1, 1e-12);
    EXPECT_NEAR(r_precision(q.ranking, q.query_labels, q.ref_labels), row.rp, 1e-12);
    EXPECT_NEAR(map_at_r(q.ranking, q.query_labels, q.ref_labels), row.map, 1e-12);
  }
}

TEST(RetrievalMetrics, HandEnumeratedRFive) {
  const auto q = single_query(5, {1, 3, 4});
  EXPECT_NEAR(r_precision(q.ranking, q.query_labels, q.ref_labels), 0.6, 1e-15);
  EXPECT_NEAR(map_at_r(q.ranking, q.query_labels, q.ref_labels), (1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 5.0, 1e-15);
  const auto none = single_query(5, {6, 7});
  EXPECT_EQ(map_at_r(none.ranking, none.query_labels, none.ref_labels), 0.0);
  EXPECT_EQ(r_precision(none.ranking, none.query_labels, none.ref_labels), 0.0);
}

TEST(RetrievalMetrics, InsufficientNeighbours) {
  auto q = single_query(5, {1});
  q.ranking.lists[0].resize(3);
  EXPECT_EQ(kind_of([&] { (void)map_at_r(q.ranking, q.query_labels, q.ref_labels); }),
            ErrorKind::InsufficientNeighbors);
  EXPECT_EQ(kind_of([&] { (void)precision_at_k(q.ranking, q.query_labels, q.ref_labels, 4); }),
            ErrorKind::InsufficientNeighbors);
}

TEST(RetrievalMetrics, RecallAtK) {
  const auto q = single_query(4, {3});
  EXPECT_EQ(precision_at_k(q.ranking, q.query_labels, q.ref_labels, 1), 0.0);
  EXPECT_EQ(precision_at_k(q.ranking, q.query_labels, q.ref_labels, 2), 0.0);
  EXPECT_EQ(precision_at_k(q.ranking, q.query_labels, q.ref_labels, 3), 1.0);
}

TEST(EvaluateRetrieval, TwoSamplesDifferentClasses) {
  Matrix m(2, 1);
  m(1, 0) = 1.0;
  const auto r = evaluate_retrieval(EmbeddingSet(m), LabelSet({0, 1}));
  EXPECT_EQ(r.p_at_1, 0.0);
  EXPECT_EQ(r.n_queries_skipped, 2u);
  EXPECT_EQ(r.n_queries_evaluated, 0u);
}

TEST(EvaluateRetrieval, DuplicatePairsScorePerfectly) {
  std::mt19937_64 rng(3);
  const Matrix base = dt::random_matrix(rng, 12, 4);
  Matrix m(24, 4);
  std::vector<int> labels;
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 4; ++j) m(2 * i, j) = m(2 * i + 1, j) = base(i, j);
    labels.push_back(static_cast<int>(i));
    labels.push_back(static_cast<int>(i));
  }
  const auto r = evaluate_retrieval(EmbeddingSet(m), LabelSet(labels));
  EXPECT_EQ(r.p_at_1, 1.0);
  EXPECT_EQ(r.r_precision, 1.0);
  EXPECT_EQ(r.map_at_r, 1.0);
}

TEST(EvaluateRetrieval, SkipsSingletonClasses) {
  Matrix m(5, 1);
  const double xs[] = {0.0, 1.0, 10.0, 11.0, 30.0};
  for (std::size_t i = 0; i < 5; ++i) m(i, 0) = xs[i];
  const auto r = evaluate_retrieval(EmbeddingSet(m), LabelSet({0, 0, 1, 1, 2}));
  EXPECT_EQ(r.n_queries_evaluated, 4u);
  EXPECT_EQ(r.n_queries_skipped, 1u);
  EXPECT_EQ(r.map_at_r, 1.0);
  EXPECT_NEAR(r.p_at_1, 0.8, 1e-15);
}

TEST(EvaluateRetrieval, MatchesNaiveOracleAndSerialKernel) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> nd(2, 300);
    const std::size_t n = nd(rng);
    const Metric metric = trial % 2 ? Metric::cosine : Metric::euclidean;
    const Matrix m = dt::random_matrix(rng, n, 1 + trial % 8);
    const auto labels = dt::random_labels(rng, n, 1 + trial % 15);
    const auto got = evaluate_retrieval(EmbeddingSet(m), LabelSet(labels), metric);
    EXPECT_EQ(got, dt::oracle_retrieval(m, labels, metric)) << "trial " << trial;
    EXPECT_EQ(got, evaluate_retrieval_serial(EmbeddingSet(m), LabelSet(labels), metric));
  }
}

TEST(EvaluateRetrieval, PerQueryMapNeverExceedsRPrecision) {
  std::mt19937_64 rng(12);
  const Matrix m = dt::random_matrix(rng, 200, 3);
  const auto labels = dt::random_labels(rng, 200, 6);
  for (const auto& s : kernels::omp::retrieval_scores(m, labels, Metric::euclidean)) {
    if (s.same_class_refs == 0) continue;
    const double rp = static_cast<double>(s.correct_in_r) / static_cast<double>(s.same_class_refs);
    EXPECT_LE(s.average_precision, rp + 1e-15);
    EXPECT_LE(rp, 1.0);
  }
}

TEST(EvaluateRetrieval, AllOneIffClassesFullyRetrieved) {
  const auto tight = dt::toy_configuration(0.05, 1);
  const auto r = evaluate_retrieval(tight.embeddings, tight.labels);
  EXPECT_EQ(r.p_at_1, 1.0);
  EXPECT_EQ(r.r_precision, 1.0);
  EXPECT_EQ(r.map_at_r, 1.0);
  const auto loose = dt::toy_configuration(2.0, 1);
  const auto s = evaluate_retrieval(loose.embeddings, loose.labels);
  EXPECT_LT(s.r_precision, 1.0);
  EXPECT_LT(s.map_at_r, 1.0);
}

TEST(EvaluateRetrieval, InvariantUnderOrthogonalTransform) {
  std::mt19937_64 rng(31);
  const Matrix m = dt::random_matrix(rng, 150, 6);
  const auto labels = dt::random_labels(rng, 150, 5);
  const Matrix rotated = dt::multiply(m, dt::random_orthogonal(rng, 6));
  const auto a = evaluate_retrieval(EmbeddingSet(m), LabelSet(labels));
  const auto b = evaluate_retrieval(EmbeddingSet(rotated), LabelSet(labels));
  EXPECT_NEAR(a.p_at_1, b.p_at_1, 1e-9);
  EXPECT_NEAR(a.r_precision, b.r_precision, 1e-9);
  EXPECT_NEAR(a.map_at_r, b.map_at_r, 1e-9);
}

TEST(EvaluateRetrieval, ToySpacesSeparateOnlyUnderMapAtR) {
  double previous = -1.0;
  for (double spread : {2.0, 0.8, 0.1}) {
    const auto toy = dt::toy_configuration(spread, 42);
    const auto r = evaluate_retrieval(toy.embeddings, toy.labels);
    EXPECT_GE(r.p_at_1, 0.99);
    EXPECT_GT(r.map_at_r, previous);
    previous = r.map_at_r;
  }
}

TEST(MetricReport, JsonKeysAndRoundTrip) {
  MetricReport r;
  r.p_at_1 = 0.1 + 0.2;
  r.r_precision = 1.0 / 3.0;
  r.map_at_r = 0.123456789012345678;
  r.nmi = 0.5;
  r.n_queries_evaluated = 10;
  r.n_queries_skipped = 2;
  nlohmann::json j = r;
  for (const char* key : {"p_at_1", "r_precision", "map_at_r", "nmi", "ami", "f1", "n_queries_evaluated",
                          "n_queries_skipped"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["ami"].is_null());
  const auto back = nlohmann::json::parse(j.dump()).get<MetricReport>();
  EXPECT_EQ(back, r);
}

TEST(KMeans, EachPointOwnCluster) {
  std::mt19937_64 rng(1);
  const EmbeddingSet e(dt::random_matrix(rng, 15, 3));
  const auto a = kmeans(e, 15, 9);
  EXPECT_EQ(a.inertia, 0.0);
  EXPECT_EQ(std::set<int>(a.cluster.begin(), a.cluster.end()).size(), 15u);
}

TEST(KMeans, SingleClusterInertiaIsTotalDeviation) {
  std::mt19937_64 rng(2);
  const Matrix m = dt::random_matrix(rng, 40, 4);
  std::vector<double> mean(4, 0.0);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 4; ++j) mean[j] += m(i, j) / 40.0;
  double total = 0.0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 4; ++j) total += (m(i, j) - mean[j]) * (m(i, j) - mean[j]);
  const auto a = kmeans(EmbeddingSet(m), 1, 5);
  EXPECT_NEAR(a.inertia, total, 1e-9 * total);
  for (int c : a.cluster) EXPECT_EQ(c, 0);
}

TEST(KMeans, RecoversSeparatedBlobs) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.05);
  Matrix m(60, 2);
  std::vector<int> truth;
  for (std::size_t i = 0; i < 60; ++i) {
    const bool right = i % 2;
    m(i, 0) = (right ? 10.0 : -10.0) + g(rng);
    m(i, 1) = g(rng);
    truth.push_back(right);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = kmeans(EmbeddingSet(m), 2, seed);
    const auto q = cluster_quality(a.cluster, truth);
    EXPECT_EQ(q.nmi, 1.0);
  }
}

TEST(KMeans, InertiaNonIncreasingAndDeterministic) {
  std::mt19937_64 rng(4);
  const EmbeddingSet e(dt::random_matrix(rng, 500, 5));
  const auto a = kmeans(e, 12, 77);
  for (std::size_t t = 1; t < a.inertia_history.size(); ++t)
    EXPECT_LE(a.inertia_history[t], a.inertia_history[t - 1] * (1.0 + 1e-12));
  const auto b = kmeans(e, 12, 77);
  EXPECT_EQ(a.cluster, b.cluster);
  EXPECT_EQ(a.inertia, b.inertia);
  EXPECT_EQ(kind_of([&] { kmeans(e, 501, 1); }), ErrorKind::KTooLarge);
}

TEST(KMeans, OmpAssignmentMatchesSerial) {
  std::mt19937_64 rng(5);
  const Matrix p = dt::random_matrix(rng, 400, 6);
  const Matrix c = dt::random_matrix(rng, 30, 6);
  const auto a = kernels::omp::assign_nearest(p, c);
  const auto b = kernels::serial::assign_nearest(p, c);
  EXPECT_EQ(a.cluster, b.cluster);
  EXPECT_EQ(a.squared_distance, b.squared_distance);
}

TEST(ClusterQuality, PerfectAndIndependentPartitions) {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  const std::vector<int> relabelled{5, 5, 3, 3, 9, 9};
  const auto perfect = cluster_quality(relabelled, labels);
  EXPECT_EQ(perfect.nmi, 1.0);
  EXPECT_EQ(perfect.ami, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  const auto indep = cluster_quality(std::vector<int>{0, 1, 0, 1}, std::vector<int>{0, 0, 1, 1});
  EXPECT_NEAR(indep.nmi, 0.0, 1e-15);
  EXPECT_EQ(kind_of([] { cluster_quality(std::vector<int>{0, 1}, std::vector<int>{0}); }), ErrorKind::LengthMismatch);
}

TEST(ClusterQuality, SingleClusterConventions) {
  const auto same = cluster_quality(std::vector<int>{0, 0, 0}, std::vector<int>{4, 4, 4});
  EXPECT_EQ(same.nmi, 1.0);
  const auto differ = cluster_quality(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1});
  EXPECT_EQ(differ.nmi, 0.0);
  EXPECT_EQ(differ.ami, 0.0);
}

TEST(ClusterQuality, MatchesScikitLearnReferenceValues) {
  // normalized_mutual_info_score(average_method="geometric") and
  // adjusted_mutual_info_score (arithmetic) from scikit-learn.
  const auto a = cluster_quality(std::vector<int>{0, 0, 1, 1, 1, 2, 2, 2, 0, 0},
                                 std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2, 2});
  EXPECT_NEAR(a.nmi, 0.3946483716358942, 1e-12);
  EXPECT_NEAR(a.ami, 0.17152423540072842, 1e-12);
  const auto b = cluster_quality(std::vector<int>{1, 1, 1, 2, 2, 0, 0, 3, 3, 3, 3, 3},
                                 std::vector<int>{0, 1, 1, 2, 2, 2, 3, 3, 3, 3, 0, 4});
  EXPECT_NEAR(b.nmi, 0.6007839458647959, 1e-12);
  EXPECT_NEAR(b.ami, 0.2926367505223164, 1e-12);
}

TEST(ClusterQuality, PairwiseF1ByHand) {
  // clusters {0,1,2},{3,4}; classes {0,1},{2,3,4}
  // same-cluster pairs: 3 + 1 = 4; same-class pairs: 1 + 3 = 4; shared: (0,1),(3,4) = 2
  const auto q = cluster_quality(std::vector<int>{0, 0, 0, 1, 1}, std::vector<int>{0, 0, 1, 1, 1});
  EXPECT_NEAR(q.f1, 0.5, 1e-15);
}

TEST(ClusterQuality, RandomAssignmentNmiGrowsWithClassCount) {
  std::mt19937_64 rng(10);
  auto mean_nmi = [&](int classes) {
    const std::size_t n = static_cast<std::size_t>(classes) * 20;
    double total = 0.0;
    double ami_total = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
      const auto clusters = dt::random_labels(rng, n, classes);
      const auto q = cluster_quality(clusters, labels);
      total += q.nmi;
      ami_total += q.ami;
    }
    EXPECT_LT(ami_total / 5.0, 0.05) << classes << " classes";
    return total / 5.0;
  };
  const double small = mean_nmi(10);
  const double large = mean_nmi(1000);
  EXPECT_GT(large, small + 0.3);
}

TEST(LagOneAutocorrelation, Cases) {
  const std::vector<double> flat{2, 2, 2, 2};
  EXPECT_EQ(kind_of([&] { (void)lag_one_autocorrelation(flat); }), ErrorKind::DegenerateSeries);
  const std::vector<double> shortie{1, 2};
  EXPECT_EQ(kind_of([&] { (void)lag_one_autocorrelation(shortie); }), ErrorKind::DegenerateSeries);
  const std::vector<double> alt{1, -1, 1, -1, 1, -1};
  EXPECT_LT(lag_one_autocorrelation(alt), 0.0);
  // (1..5) vs (2..6): identical deviations, correlation exactly 1
  const std::vector<double> ramp{1, 2, 3, 4, 5, 6};
  EXPECT_NEAR(lag_one_autocorrelation(ramp), 1.0, 1e-15);
  // direct evaluation: x=(3,1,4,1,5), y=(1,4,1,5,9)
  const std::vector<double> pi{3, 1, 4, 1, 5, 9};
  const double mx = 14.0 / 5.0, my = 20.0 / 5.0;
  const double xs[] = {3, 1, 4, 1, 5}, ys[] = {1, 4, 1, 5, 9};
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 5; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  EXPECT_NEAR(lag_one_autocorrelation(pi), sxy / std::sqrt(sxx * syy), 1e-14);
}
