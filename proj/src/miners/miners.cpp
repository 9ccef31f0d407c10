#include "dml/miners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "dml/error.hpp"

namespace dml {

namespace {

double row_distance(const Matrix& x, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.cols(); ++k) {
    const double d = x(a, k) - x(b, k);
    s += d * d;
  }
  return std::sqrt(s);
}

Matrix cosine_similarities(const Matrix& x) {
  const std::size_t n = x.rows();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::sqrt(squared_norm(x.row(i)));
    require(norms[i] > kNormEpsilon, ErrorKind::ZeroVector, "cosine similarity of a zero row");
  }
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = dot(x.row(i), x.row(j)) / (norms[i] * norms[j]);
  return s;
}

void check(const Batch& b) {
  require(b.labels.size() == b.embeddings.rows(), ErrorKind::LengthMismatch, "one label per batch row expected");
}

}  // namespace

void BatchSpec::validate() const {
  require(classes >= 2, ErrorKind::InvalidArgument, "batch needs at least 2 classes");
  require(per_class >= 1, ErrorKind::InvalidArgument, "batch needs at least 1 sample per class");
}

std::vector<std::size_t> sample_batch(const LabelSet& labels, const BatchSpec& spec, Rng& rng) {
  spec.validate();
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels.ids()[i]].push_back(i);
  require(members.size() >= spec.classes, ErrorKind::TooFewClasses,
          "batch wants " + std::to_string(spec.classes) + " classes, only " + std::to_string(members.size()) +
              " available");

  std::vector<const std::vector<std::size_t>*> pool;
  for (const auto& [id, idx] : members) pool.push_back(&idx);
  // partial Fisher-Yates picks C classes without replacement
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::uniform_int_distribution<std::size_t> u(c, pool.size() - 1);
    std::swap(pool[c], pool[u(rng)]);
  }

  std::vector<std::size_t> out;
  out.reserve(spec.size());
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<std::size_t> idx = *pool[c];
    if (idx.size() >= spec.per_class) {
      for (std::size_t m = 0; m < spec.per_class; ++m) {
        std::uniform_int_distribution<std::size_t> u(m, idx.size() - 1);
        std::swap(idx[m], idx[u(rng)]);
        out.push_back(idx[m]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> u(0, idx.size() - 1);
      for (std::size_t m = 0; m < spec.per_class; ++m) out.push_back(idx[u(rng)]);
    }
  }
  return out;
}

std::string_view to_string(MinerKind k) {
  switch (k) {
    case MinerKind::none:
      return "none";
    case MinerKind::multisimilarity:
      return "multisimilarity";
    case MinerKind::semihard:
      return "semihard";
    case MinerKind::distance_weighted:
      return "distance_weighted";
  }
  return "?";
}

MinerKind parse_miner(std::string_view id) {
  for (MinerKind k : {MinerKind::none, MinerKind::multisimilarity, MinerKind::semihard, MinerKind::distance_weighted})
    if (to_string(k) == id) return k;
  fail(ErrorKind::UnknownKind, "unknown miner '" + std::string(id) + "'");
}

void MinerParams::validate() const {
  require(std::isfinite(epsilon), ErrorKind::InvalidArgument, "epsilon must be finite");
  require(std::isfinite(semihard_margin) && semihard_margin >= 0.0, ErrorKind::InvalidArgument,
          "semihard margin must be >= 0");
  require(std::isfinite(clamp_min) && clamp_min > 0.0 && clamp_min < 2.0, ErrorKind::InvalidArgument,
          "clamp_min must lie in (0, 2)");
}

MinedPairs multisimilarity_miner(const Batch& b, double epsilon) {
  check(b);
  const Matrix s = cosine_similarities(b.embeddings);
  const std::size_t n = b.labels.size();
  MinedPairs out;
  for (std::size_t a = 0; a < n; ++a) {
    double hardest_pos = std::numeric_limits<double>::infinity();
    double hardest_neg = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (b.labels[j] == b.labels[a])
        hardest_pos = std::min(hardest_pos, s(a, j));
      else
        hardest_neg = std::max(hardest_neg, s(a, j));
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (b.labels[j] == b.labels[a]) {
        if (s(a, j) < hardest_neg + epsilon) out.positives.emplace_back(a, j);
      } else if (s(a, j) > hardest_pos - epsilon) {
        out.negatives.emplace_back(a, j);
      }
    }
  }
  return out;
}

MinedTriplets semihard_triplet_miner(const Batch& b, double margin) {
  check(b);
  const std::size_t n = b.labels.size();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = row_distance(b.embeddings, i, j);
  MinedTriplets out;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || b.labels[p] != b.labels[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (b.labels[q] == b.labels[a]) continue;
        if (d(a, p) < d(a, q) && d(a, q) < d(a, p) + margin) out.triplets.push_back({a, p, q});
      }
    }
  return out;
}

std::vector<double> distance_weights(std::span<const double> distances, std::size_t dim, double clamp_min) {
  require(!distances.empty(), ErrorKind::NoNegatives, "no candidate negatives");
  require(dim >= 2, ErrorKind::BadDim, "distance weighting needs dim >= 2");
  const double upper = std::nextafter(2.0, 0.0);
  const double nd = static_cast<double>(dim);
  std::vector<double> logw(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double d = std::clamp(distances[i], clamp_min, upper);
    // -log q(d) = -(n-2) log d - ((n-3)/2) log(1 - d^2/4)
    logw[i] = -(nd - 2.0) * std::log(d) - 0.5 * (nd - 3.0) * std::log1p(-0.25 * d * d);
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& w : logw) total += (w = std::exp(w - mx));
  for (double& w : logw) w /= total;
  return logw;
}

MinedTriplets distance_weighted_sampler(const Batch& b, double clamp_min, Rng& rng) {
  check(b);
  const std::size_t n = b.labels.size();
  MinedTriplets out;
  std::vector<std::size_t> negs;
  std::vector<double> dist;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t a = 0; a < n; ++a) {
    negs.clear();
    dist.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (b.labels[j] != b.labels[a]) {
        negs.push_back(j);
        dist.push_back(row_distance(b.embeddings, a, j));
      }
    require(!negs.empty(), ErrorKind::NoNegatives, "anchor " + std::to_string(a) + " has no negatives");
    const auto w = distance_weights(dist, b.embeddings.cols(), clamp_min);
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || b.labels[p] != b.labels[a]) continue;
      const double target = unit(rng);
      double acc = 0.0;
      std::size_t pick = negs.size() - 1;
      for (std::size_t t = 0; t < w.size(); ++t) {
        acc += w[t];
        if (target < acc) {
          pick = t;
          break;
        }
      }
      out.triplets.push_back({a, p, negs[pick]});
    }
  }
  return out;
}

std::optional<MinedTuples> mine(MinerKind k, const Batch& b, const MinerParams& p, Rng& rng) {
  switch (k) {
    case MinerKind::none:
      return std::nullopt;
    case MinerKind::multisimilarity:
      return multisimilarity_miner(b, p.epsilon);
    case MinerKind::semihard:
      return semihard_triplet_miner(b, p.semihard_margin);
    case MinerKind::distance_weighted:
      return distance_weighted_sampler(b, p.clamp_min, rng);
  }
  return std::nullopt;
}

}  // namespace dml
