#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include "dml/embed_io.hpp"
#include "dml/embedcore.hpp"
#include "dml/kernels.hpp"
#include "oracles.hpp"

using namespace dml;
namespace dt = dml::testing;

namespace {

EmbeddingSet rows(std::initializer_list<std::initializer_list<double>> r) {
  const std::size_t n = r.size();
  const std::size_t d = r.begin()->size();
  Matrix m(n, d);
  std::size_t i = 0;
  for (const auto& row : r) {
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return EmbeddingSet(std::move(m));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected dml::Error";
  return ErrorKind::IoError;
}

}  // namespace

TEST(L2Normalize, Examples) {
  auto a = l2_normalize(rows({{1, 0, 0}}));
  EXPECT_DOUBLE_EQ(a.data()(0, 0), 1.0);
  auto b = l2_normalize(rows({{3, 4}}));
  EXPECT_NEAR(b.data()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(b.data()(0, 1), 0.8, 1e-15);
  EXPECT_EQ(kind_of([] { l2_normalize(rows({{0, 0}})); }), ErrorKind::ZeroVector);
}

TEST(L2Normalize, UnitNormAndIdempotent) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingSet e(dt::random_matrix(rng, 30, 1 + trial % 9, 5.0));
    const auto once = l2_normalize(e);
    const auto twice = l2_normalize(once);
    for (std::size_t i = 0; i < e.n(); ++i) {
      EXPECT_NEAR(std::sqrt(squared_norm(once.row(i))), 1.0, 1e-12);
      for (std::size_t j = 0; j < e.d(); ++j) EXPECT_NEAR(once.data()(i, j), twice.data()(i, j), 1e-12);
    }
  }
}

TEST(EmbeddingSet, RejectsNonFinite) {
  Matrix m(2, 2);
  m(1, 1) = std::nan("");
  EXPECT_EQ(kind_of([&] { EmbeddingSet e(m); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { EmbeddingSet e(Matrix(0, 3)); }), ErrorKind::BadDim);
}

TEST(LabelSet, CanonicalMap) {
  LabelSet l({7, 3, 7, 100});
  EXPECT_EQ(l.num_classes(), 3u);
  EXPECT_EQ(l.classes(), (std::vector<int>{3, 7, 100}));
  EXPECT_EQ(l.canonical(), (std::vector<int>{1, 0, 1, 2}));
  EXPECT_EQ(l.canonical_of(100), 2);
  EXPECT_EQ(kind_of([&] { (void)l.canonical_of(5); }), ErrorKind::UnknownClass);
}

TEST(PairwiseDistances, Examples) {
  auto z = rows({{0, 0}});
  EXPECT_EQ(pairwise_distances(z, z).values(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pairwise_distances(z, rows({{3, 4}})).values(0, 0), 5.0);
  EXPECT_NEAR(pairwise_distances(rows({{1, 0}}), rows({{0, 1}}), Metric::cosine).values(0, 0), 1.0, 1e-15);
  EXPECT_EQ(kind_of([] { pairwise_distances(rows({{1, 0}}), rows({{1, 0, 0}})); }), ErrorKind::DimMismatch);
}

TEST(PairwiseDistances, SelfIsSymmetricWithZeroDiagonal) {
  std::mt19937_64 rng(3);
  const EmbeddingSet e(dt::random_matrix(rng, 40, 7));
  for (Metric m : {Metric::euclidean, Metric::cosine}) {
    const auto dm = pairwise_distances(e, e, m);
    for (std::size_t i = 0; i < e.n(); ++i) {
      EXPECT_EQ(dm.values(i, i), 0.0);
      for (std::size_t j = 0; j < e.n(); ++j) {
        EXPECT_EQ(dm.values(i, j), dm.values(j, i));
        EXPECT_GE(dm.values(i, j), 0.0);
        if (m == Metric::cosine) {
          EXPECT_LE(dm.values(i, j), 2.0);
        }
      }
    }
  }
}

TEST(PairwiseDistances, MatchesDirectFormula) {
  std::mt19937_64 rng(5);
  const EmbeddingSet q(dt::random_matrix(rng, 25, 6));
  const EmbeddingSet r(dt::random_matrix(rng, 31, 6));
  const auto dm = pairwise_distances(q, r);
  for (std::size_t i = 0; i < q.n(); ++i)
    for (std::size_t j = 0; j < r.n(); ++j) EXPECT_NEAR(dm.values(i, j), dt::direct_euclidean(q.row(i), r.row(j)), 1e-12);
}

TEST(PairwiseDistances, OrthogonalInvariance) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial);
    const Matrix qm = dt::random_matrix(rng, 20, d);
    const Matrix rm = dt::random_matrix(rng, 15, d);
    const Matrix rot = dt::random_orthogonal(rng, d);
    const auto before = pairwise_distances(EmbeddingSet(qm), EmbeddingSet(rm));
    const auto after = pairwise_distances(EmbeddingSet(dt::multiply(qm, rot)), EmbeddingSet(dt::multiply(rm, rot)));
    for (std::size_t k = 0; k < before.values.size(); ++k)
      EXPECT_NEAR(before.values.flat()[k], after.values.flat()[k], 1e-9);
  }
}

TEST(Knn, Examples) {
  auto line = rows({{0}, {1}, {3}});
  auto r = knn(line, line, 1, true);
  EXPECT_EQ(r.lists[0][0].index, 1u);
  EXPECT_DOUBLE_EQ(r.lists[0][0].distance, 1.0);

  std::mt19937_64 rng(1);
  const EmbeddingSet e(dt::random_matrix(rng, 12, 3));
  auto all = knn(e, e, e.n(), false);
  for (std::size_t i = 0; i < e.n(); ++i) {
    EXPECT_EQ(all.lists[i][0].index, i);
    EXPECT_EQ(all.lists[i][0].distance, 0.0);
    EXPECT_EQ(all.lists[i].size(), e.n());
  }

  // refs 2 and 5 both at distance 1 from the query
  auto refs = rows({{5}, {4}, {1}, {7}, {-3}, {-1}});
  auto tie = knn(rows({{0}}), refs, 1, false);
  EXPECT_EQ(tie.lists[0][0].index, 2u);

  EXPECT_EQ(kind_of([&] { knn(line, line, 3, true); }), ErrorKind::KTooLarge);
  EXPECT_EQ(kind_of([&] { knn(line, line, 4, false); }), ErrorKind::KTooLarge);
}

TEST(Knn, MatchesFullSortOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 24; ++trial) {
    std::uniform_int_distribution<std::size_t> nd(2, 500);
    const std::size_t n = nd(rng);
    const std::size_t d = 1 + trial % 12;
    const Metric metric = trial % 2 ? Metric::cosine : Metric::euclidean;
    Matrix m = dt::random_matrix(rng, n, d);
    if (trial % 3 == 0) {
      // quantise so that exact distance ties occur
      for (double& v : m.flat()) v = std::round(v * 2.0) / 2.0 + (metric == Metric::cosine ? 3.0 : 0.0);
    }
    const EmbeddingSet e(m);
    const std::size_t k = std::min<std::size_t>(n - 1, 1 + trial * 7 % 40);
    const auto got = knn(e, e, k, true, metric);
    const auto want = dt::oracle_knn(m, m, k, true, true, metric);
    ASSERT_EQ(got.lists.size(), want.size());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(got.lists[i], want[i]) << "trial " << trial << " query " << i;
  }
}

TEST(Knn, OmpEqualsSerialReference) {
  std::mt19937_64 rng(99);
  const Matrix q = dt::random_matrix(rng, 137, 9);
  const Matrix r = dt::random_matrix(rng, 311, 9);
  for (Metric metric : {Metric::euclidean, Metric::cosine}) {
    EXPECT_EQ(kernels::omp::knn(q, r, 17, false, false, metric), kernels::serial::knn(q, r, 17, false, false, metric));
    Matrix a;
    Matrix b;
    kernels::omp::distance_matrix(q, r, metric, false, a);
    kernels::serial::distance_matrix(q, r, metric, false, b);
    EXPECT_EQ(a, b);
  }
}

TEST(Knn, PermutationEquivariance) {
  std::mt19937_64 rng(8);
  const std::size_t n = 60;
  const Matrix m = dt::random_matrix(rng, n, 5);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Matrix pm = gather_rows(m, perm);
  const auto a = knn(EmbeddingSet(m), EmbeddingSet(m), 10, true);
  const auto b = knn(EmbeddingSet(pm), EmbeddingSet(pm), 10, true);
  for (std::size_t i = 0; i < n; ++i) {
    // permuted query i is original query perm[i]; its neighbours map through perm
    for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(perm[b.lists[i][t].index], a.lists[perm[i]][t].index);
  }
}

TEST(Pca, CollinearPointsPreserveDistances) {
  Matrix m(6, 2);
  const double ts[] = {-2.0, -0.5, 0.0, 1.0, 1.5, 4.0};
  for (int i = 0; i < 6; ++i) {
    m(i, 0) = 1.0 + 0.6 * ts[i];
    m(i, 1) = -2.0 + 0.8 * ts[i];
  }
  const EmbeddingSet e(m);
  const auto p = pca_reduce(e, 1);
  ASSERT_EQ(p.d(), 1u);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      EXPECT_NEAR(std::abs(p.data()(i, 0) - p.data()(j, 0)), dt::direct_euclidean(e.row(i), e.row(j)), 1e-8);
}

TEST(Pca, FullRankIsARotation) {
  std::mt19937_64 rng(4);
  const EmbeddingSet e(dt::random_matrix(rng, 50, 6));
  const auto p = pca_reduce(e, 6);
  for (std::size_t i = 0; i < e.n(); ++i)
    for (std::size_t j = 0; j < e.n(); ++j)
      EXPECT_NEAR(dt::direct_euclidean(p.row(i), p.row(j)), dt::direct_euclidean(e.row(i), e.row(j)), 1e-8);
  // columns ordered by decreasing variance
  std::vector<double> var(6, 0.0);
  for (std::size_t i = 0; i < e.n(); ++i)
    for (std::size_t c = 0; c < 6; ++c) var[c] += p.data()(i, c) * p.data()(i, c);
  for (std::size_t c = 1; c < 6; ++c) EXPECT_GE(var[c - 1], var[c]);
}

TEST(Pca, BadDim) {
  std::mt19937_64 rng(4);
  const EmbeddingSet e(dt::random_matrix(rng, 10, 3));
  EXPECT_EQ(kind_of([&] { pca_reduce(e, 4); }), ErrorKind::BadDim);
  EXPECT_EQ(kind_of([&] { pca_reduce(e, 0); }), ErrorKind::BadDim);
  const EmbeddingSet small(dt::random_matrix(rng, 3, 5));
  EXPECT_EQ(kind_of([&] { pca_reduce(small, 3); }), ErrorKind::BadDim);
}

TEST(SymmetricEigen, AgreesWithEigenLibrary) {
  std::mt19937_64 rng(21);
  for (std::size_t d : {2u, 5u, 16u, 40u}) {
    const Matrix x = dt::random_matrix(rng, 3 * d, d);
    Matrix a(d, d);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) a(p, q) += x(i, p) * x(i, q);
    const auto mine = symmetric_eigen(a);
    Eigen::MatrixXd ea(d, d);
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = 0; q < d; ++q) ea(p, q) = a(p, q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(ea);
    const double scale = solver.eigenvalues().cwiseAbs().maxCoeff();
    for (std::size_t c = 0; c < d; ++c) {
      EXPECT_NEAR(mine.values[c], solver.eigenvalues()(static_cast<Eigen::Index>(d - 1 - c)), 1e-10 * scale);
      // sign convention: largest-magnitude component is positive
      std::size_t arg = 0;
      for (std::size_t k = 1; k < d; ++k)
        if (std::abs(mine.vectors(k, c)) > std::abs(mine.vectors(arg, c))) arg = k;
      EXPECT_GT(mine.vectors(arg, c), 0.0);
    }
  }
}

TEST(EmbeddingIo, CsvRoundTripIsExact) {
  std::mt19937_64 rng(6);
  const EmbeddingSet e(dt::random_matrix(rng, 17, 4));
  const LabelSet labels(dt::random_labels(rng, 17, 5));
  const auto path = std::filesystem::temp_directory_path() / "dml_test_roundtrip.csv";
  write_embeddings_csv(path, e, labels);
  const auto back = read_embeddings(path);
  EXPECT_EQ(back.embeddings, e);
  EXPECT_EQ(back.labels, labels);
  std::filesystem::remove(path);
}

TEST(EmbeddingIo, BinaryRoundTripAtFloatPrecision) {
  std::mt19937_64 rng(7);
  const EmbeddingSet e(dt::random_matrix(rng, 9, 3));
  const LabelSet labels(dt::random_labels(rng, 9, 4));
  const auto path = std::filesystem::temp_directory_path() / "dml_test_roundtrip.emb";
  write_embeddings_binary(path, e, labels);
  const auto back = read_embeddings(path);
  EXPECT_EQ(back.labels, labels);
  for (std::size_t k = 0; k < e.data().size(); ++k)
    EXPECT_EQ(back.embeddings.data().flat()[k], static_cast<double>(static_cast<float>(e.data().flat()[k])));

  // layout: magic, n, d, labels, values
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(bytes.size(), 4u + 8u + 9u * 4u + 27u * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "EMB1");
  EXPECT_EQ(bytes[4], 9);
  EXPECT_EQ(bytes[8], 3);
  std::filesystem::remove(path);
}

TEST(EmbeddingIo, RejectsMalformedCsv) {
  const auto path = std::filesystem::temp_directory_path() / "dml_test_bad.csv";
  {
    std::ofstream out(path);
    out << "label,f0,f2\n1,0.5,0.25\n";
  }
  EXPECT_EQ(kind_of([&] { read_embeddings_csv(path); }), ErrorKind::ParseError);
  {
    std::ofstream out(path);
    out << "label,f0\n1,abc\n";
  }
  EXPECT_EQ(kind_of([&] { read_embeddings_csv(path); }), ErrorKind::ParseError);
  std::filesystem::remove(path);
  EXPECT_EQ(kind_of([&] { read_embeddings_csv(path); }), ErrorKind::IoError);
}
