#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "dml/kernels.hpp"
#include "dml/metrics.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

Matrix kmeanspp_seed(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Matrix centres(k, d);
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t idx, std::size_t slot) {
    chosen[idx] = 1;
    const auto src = x.row(idx);
    std::copy(src.begin(), src.end(), centres.row(slot).begin());
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const auto p = x.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = p[j] - src[j];
        s += diff * diff;
      }
      d2[i] = std::min(d2[i], s);
    }
  };

  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  take(first(rng), 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      // every remaining point duplicates a centre; pick uniformly among them
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) rest.push_back(i);
      std::uniform_int_distribution<std::size_t> u(0, rest.size() - 1);
      pick = rest[u(rng)];
    }
    take(pick, c);
  }
  return centres;
}

double entropy(const std::vector<std::size_t>& counts, double n) {
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

std::vector<int> compact(std::span<const int> ids) {
  std::map<int, int> index;
  std::vector<int> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto [it, inserted] = index.emplace(ids[i], static_cast<int>(index.size()));
    out[i] = it->second;
  }
  return out;
}

// Expected mutual information between two random partitions with the given
// marginals under the hypergeometric model. Marginals are grouped by value so
// that large, balanced partitions cost O(#distinct sizes^2 * max size).
double expected_mutual_information(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                                   std::size_t n) {
  std::vector<double> lf(n + 1, 0.0);
  for (std::size_t i = 1; i <= n; ++i) lf[i] = lf[i - 1] + std::log(static_cast<double>(i));
  std::map<std::size_t, std::size_t> ga;
  std::map<std::size_t, std::size_t> gb;
  for (auto v : a) ++ga[v];
  for (auto v : b) ++gb[v];
  const double nd = static_cast<double>(n);
  double emi = 0.0;
  for (const auto& [ai, ma] : ga) {
    for (const auto& [bj, mb] : gb) {
      const std::size_t lo = std::max<std::size_t>(1, ai + bj > n ? ai + bj - n : 0);
      const std::size_t hi = std::min(ai, bj);
      double s = 0.0;
      for (std::size_t nij = lo; nij <= hi; ++nij) {
        const double log_p = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n] - lf[nij] - lf[ai - nij] -
                             lf[bj - nij] - lf[n - ai - bj + nij];
        const double x = static_cast<double>(nij);
        s += (x / nd) * std::log(nd * x / (static_cast<double>(ai) * static_cast<double>(bj))) * std::exp(log_p);
      }
      emi += s * static_cast<double>(ma * mb);
    }
  }
  return emi;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

ClusterAssignment kmeans(const EmbeddingSet& e, std::size_t k, std::uint64_t seed, const KMeansOptions& opts) {
  const std::size_t n = e.n();
  const std::size_t d = e.d();
  require(k >= 1, ErrorKind::InvalidArgument, "k must be positive");
  require(k <= n, ErrorKind::KTooLarge, "k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  const Matrix& x = e.data();
  Rng rng = make_rng(seed);
  Matrix centres = kmeanspp_seed(x, k, rng);

  ClusterAssignment out;
  out.k = k;
  std::vector<int> previous;
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iterations; ++it) {
    auto a = kernels::omp::assign_nearest(x, centres);
    double inertia = 0.0;
    for (double v : a.squared_distance) inertia += v;
    out.inertia_history.push_back(inertia);
    out.iterations = it + 1;
    const bool stable = a.cluster == previous;
    const bool flat = std::isfinite(prev_inertia) && prev_inertia - inertia <= opts.relative_tolerance * prev_inertia;
    out.cluster = std::move(a.cluster);
    out.inertia = inertia;
    if (stable || flat) break;
    previous = out.cluster;
    prev_inertia = inertia;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(out.cluster[i]);
      ++counts[c];
      const auto p = x.row(i);
      auto s = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centre
      auto dst = centres.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  return out;
}

ClusterQuality cluster_quality(std::span<const int> clusters, std::span<const int> labels) {
  require(clusters.size() == labels.size(), ErrorKind::LengthMismatch,
          "cluster and label sequences differ in length");
  require(!clusters.empty(), ErrorKind::InvalidArgument, "empty partition");
  const auto a = compact(clusters);
  const auto b = compact(labels);
  const std::size_t n = a.size();
  const std::size_t ka = static_cast<std::size_t>(*std::max_element(a.begin(), a.end())) + 1;
  const std::size_t kb = static_cast<std::size_t>(*std::max_element(b.begin(), b.end())) + 1;

  std::map<std::pair<int, int>, std::size_t> table;
  std::vector<std::size_t> row(ka, 0);
  std::vector<std::size_t> col(kb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++table[{a[i], b[i]}];
    ++row[static_cast<std::size_t>(a[i])];
    ++col[static_cast<std::size_t>(b[i])];
  }
  const bool identical = table.size() == ka && ka == kb;

  const double nd = static_cast<double>(n);
  const double ha = entropy(row, nd);
  const double hb = entropy(col, nd);
  double mi = 0.0;
  for (const auto& [key, nij] : table) {
    const double x = static_cast<double>(nij);
    const double ai = static_cast<double>(row[static_cast<std::size_t>(key.first)]);
    const double bj = static_cast<double>(col[static_cast<std::size_t>(key.second)]);
    mi += (x / nd) * std::log(nd * x / (ai * bj));
  }

  ClusterQuality q;
  if (ha == 0.0 || hb == 0.0) {
    q.nmi = identical ? 1.0 : 0.0;
  } else {
    q.nmi = clamp01(mi / std::sqrt(ha * hb));
  }

  const double emi = expected_mutual_information(row, col, n);
  const double denom = 0.5 * (ha + hb) - emi;
  if (identical) {
    q.ami = 1.0;
  } else if (std::abs(denom) < 1e-15) {
    q.ami = 0.0;
  } else {
    q.ami = clamp01((mi - emi) / denom);
  }

  auto pairs = [](std::size_t c) { return static_cast<double>(c) * static_cast<double>(c > 0 ? c - 1 : 0) / 2.0; };
  double tp = 0.0;
  for (const auto& [key, nij] : table) tp += pairs(nij);
  double predicted = 0.0;
  for (auto c : row) predicted += pairs(c);
  double actual = 0.0;
  for (auto c : col) actual += pairs(c);
  if (predicted == 0.0 || actual == 0.0) {
    q.f1 = (predicted == 0.0 && actual == 0.0) ? 1.0 : 0.0;
  } else {
    const double precision = tp / predicted;
    const double recall = tp / actual;
    q.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return q;
}

ClusterQuality clustering_scores(const EmbeddingSet& e, const LabelSet& labels, std::uint64_t seed) {
  require(labels.size() == e.n(), ErrorKind::LengthMismatch, "one label per embedding expected");
  const auto assignment = kmeans(e, labels.num_classes(), seed);
  return cluster_quality(assignment.cluster, labels.ids());
}

double lag_one_autocorrelation(std::span<const double> series) {
  const std::size_t t = series.size();
  require(t >= 3, ErrorKind::DegenerateSeries, "series needs at least 3 points");
  const auto x = series.first(t - 1);
  const auto y = series.subspan(1);
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(t - 1);
  my /= static_cast<double>(t - 1);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::DegenerateSeries, "series has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace dml
