#include <algorithm>
#include <limits>
#include <queue>

#include "dml/kernels.hpp"

namespace dml::kernels::omp {

namespace {

constexpr std::size_t kQueryBlock = 16;
constexpr std::size_t kRefBlock = 256;

struct Closer {
  bool operator()(const Neighbor& a, const Neighbor& b) const {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  }
};

// Max-heap on (distance, index): the top is the worst neighbour kept so far.
class BoundedHeap {
 public:
  explicit BoundedHeap(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  void push(Neighbor nb) {
    if (items_.size() < k_) {
      items_.push_back(nb);
      std::push_heap(items_.begin(), items_.end(), Closer{});
    } else if (k_ > 0 && Closer{}(nb, items_.front())) {
      std::pop_heap(items_.begin(), items_.end(), Closer{});
      items_.back() = nb;
      std::push_heap(items_.begin(), items_.end(), Closer{});
    }
  }

  std::vector<Neighbor> sorted() && {
    std::sort_heap(items_.begin(), items_.end(), Closer{});
    return std::move(items_);
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> items_;
};

// Fills dist[(i - q0) * nr + j] for queries [q0, q1) against all references,
// walking references in cache-sized blocks.
void block_distances(const Matrix& q, const Matrix& r, const std::vector<double>& qn, const std::vector<double>& rn,
                     Metric metric, bool same_set, std::size_t q0, std::size_t q1, std::vector<double>& dist) {
  const std::size_t nr = r.rows();
  dist.resize((q1 - q0) * nr);
  for (std::size_t j0 = 0; j0 < nr; j0 += kRefBlock) {
    const std::size_t j1 = std::min(nr, j0 + kRefBlock);
    for (std::size_t i = q0; i < q1; ++i) {
      const auto qi = q.row(i);
      double* out = dist.data() + (i - q0) * nr;
      for (std::size_t j = j0; j < j1; ++j) {
        out[j] = (same_set && i == j) ? 0.0 : distance_from_parts(metric, qn[i], rn[j], dot(qi, r.row(j)));
      }
    }
  }
}

}  // namespace

void distance_matrix(const Matrix& q, const Matrix& r, Metric metric, bool same_set, Matrix& out) {
  const auto qn = row_squared_norms(q);
  const auto rn = row_squared_norms(r);
  out = Matrix(q.rows(), r.rows());
  const auto nq = static_cast<std::ptrdiff_t>(q.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < nq; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto qi = q.row(i);
    for (std::size_t j = 0; j < r.rows(); ++j) {
      out(i, j) = (same_set && i == j) ? 0.0 : distance_from_parts(metric, qn[i], rn[j], dot(qi, r.row(j)));
    }
  }
}

std::vector<std::vector<Neighbor>> knn(const Matrix& q, const Matrix& r, std::size_t k, bool exclude_self,
                                       bool same_set, Metric metric) {
  const auto qn = row_squared_norms(q);
  const auto rn = row_squared_norms(r);
  std::vector<std::vector<Neighbor>> out(q.rows());
  const std::size_t nblocks = (q.rows() + kQueryBlock - 1) / kQueryBlock;
  const auto nb = static_cast<std::ptrdiff_t>(nblocks);
#pragma omp parallel
  {
    std::vector<double> dist;
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t b = 0; b < nb; ++b) {
      const std::size_t q0 = static_cast<std::size_t>(b) * kQueryBlock;
      const std::size_t q1 = std::min(q.rows(), q0 + kQueryBlock);
      block_distances(q, r, qn, rn, metric, same_set, q0, q1, dist);
      for (std::size_t i = q0; i < q1; ++i) {
        BoundedHeap heap(k);
        const double* row = dist.data() + (i - q0) * r.rows();
        for (std::size_t j = 0; j < r.rows(); ++j) {
          if (exclude_self && i == j) continue;
          heap.push({j, row[j]});
        }
        out[i] = std::move(heap).sorted();
      }
    }
  }
  return out;
}

std::vector<QueryScore> retrieval_scores(const Matrix& e, std::span<const int> labels, Metric metric) {
  const std::size_t n = e.rows();
  const auto norms = row_squared_norms(e);
  std::vector<QueryScore> out(n);
  if (n < 2) return out;
  const std::size_t nblocks = (n + kQueryBlock - 1) / kQueryBlock;
  const auto nb = static_cast<std::ptrdiff_t>(nblocks);
#pragma omp parallel
  {
    std::vector<double> dist;
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t b = 0; b < nb; ++b) {
      const std::size_t q0 = static_cast<std::size_t>(b) * kQueryBlock;
      const std::size_t q1 = std::min(n, q0 + kQueryBlock);
      block_distances(e, e, norms, norms, metric, true, q0, q1, dist);
      for (std::size_t i = q0; i < q1; ++i) {
        std::size_t same = 0;
        for (std::size_t j = 0; j < n; ++j) same += (j != i && labels[j] == labels[i]);
        BoundedHeap heap(std::max<std::size_t>(same, 1));
        const double* row = dist.data() + (i - q0) * n;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) heap.push({j, row[j]});
        }
        const auto ranked = std::move(heap).sorted();
        out[i] = score_query(same, labels[i], ranked, labels);
      }
    }
  }
  return out;
}

Assignment assign_nearest(const Matrix& points, const Matrix& centroids) {
  Assignment a;
  a.cluster.assign(points.rows(), 0);
  a.squared_distance.assign(points.rows(), 0.0);
  const auto np = static_cast<std::ptrdiff_t>(points.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < np; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    const auto p = points.row(i);
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const auto m = centroids.row(c);
      double d2 = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double diff = p[k] - m[k];
        d2 += diff * diff;
        if (d2 >= best) break;
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

}  // namespace dml::kernels::omp
