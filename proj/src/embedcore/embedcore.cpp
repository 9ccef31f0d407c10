#include "dml/embedcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dml/kernels.hpp"

namespace dml {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::BadDim: return "BadDim";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InsufficientNeighbors: return "InsufficientNeighbors";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DegenerateSeries: return "DegenerateSeries";
    case ErrorKind::NoPairs: return "NoPairs";
    case ErrorKind::NoTriplets: return "NoTriplets";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::NoNegatives: return "NoNegatives";
    case ErrorKind::UnknownKind: return "UnknownKind";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::KinkProximity: return "KinkProximity";
    case ErrorKind::TooFewClasses: return "TooFewClasses";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DisjointnessViolation: return "DisjointnessViolation";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptySpace: return "EmptySpace";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::SeparationInfeasible: return "SeparationInfeasible";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::string_view to_string(Metric metric) { return metric == Metric::euclidean ? "euclidean" : "cosine"; }

Metric parse_metric(std::string_view name) {
  if (name == "euclidean") return Metric::euclidean;
  if (name == "cosine") return Metric::cosine;
  fail(ErrorKind::UnknownKind, "unknown metric '" + std::string(name) + "'");
}

EmbeddingSet::EmbeddingSet(Matrix data) : data_(std::move(data)) {
  require(data_.rows() >= 1 && data_.cols() >= 1, ErrorKind::BadDim, "embedding set must be at least 1x1");
  for (double v : data_.flat()) require(std::isfinite(v), ErrorKind::InvalidArgument, "non-finite embedding value");
}

LabelSet::LabelSet(std::vector<int> labels) : labels_(std::move(labels)) {
  for (int l : labels_) require(l >= 0, ErrorKind::InvalidArgument, "class ids must be non-negative");
  classes_ = labels_;
  std::sort(classes_.begin(), classes_.end());
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  for (std::size_t c = 0; c < classes_.size(); ++c) index_.emplace(classes_[c], static_cast<int>(c));
  canonical_.reserve(labels_.size());
  for (int l : labels_) canonical_.push_back(index_.at(l));
}

int LabelSet::canonical_of(int class_id) const {
  auto it = index_.find(class_id);
  require(it != index_.end(), ErrorKind::UnknownClass, "class id " + std::to_string(class_id) + " not present");
  return it->second;
}

EmbeddingSet l2_normalize(const EmbeddingSet& e, double eps) {
  Matrix out = e.data();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const double norm = std::sqrt(squared_norm(row));
    if (norm <= eps) fail(ErrorKind::ZeroVector, "row " + std::to_string(i) + " has norm " + std::to_string(norm));
    for (double& v : row) v /= norm;
  }
  return EmbeddingSet(std::move(out));
}

namespace {

bool same_data(const EmbeddingSet& a, const EmbeddingSet& b) { return &a == &b || a.data() == b.data(); }

void require_nonzero_rows(const EmbeddingSet& e) {
  for (std::size_t i = 0; i < e.n(); ++i) {
    if (std::sqrt(squared_norm(e.row(i))) <= kNormEpsilon)
      fail(ErrorKind::ZeroVector, "cosine distance undefined for zero row " + std::to_string(i));
  }
}

}  // namespace

DistanceMatrix pairwise_distances(const EmbeddingSet& q, const EmbeddingSet& r, Metric metric) {
  require(q.d() == r.d(), ErrorKind::DimMismatch,
          "query dim " + std::to_string(q.d()) + " vs reference dim " + std::to_string(r.d()));
  if (metric == Metric::cosine) {
    require_nonzero_rows(q);
    require_nonzero_rows(r);
  }
  DistanceMatrix out;
  out.metric = metric;
  kernels::omp::distance_matrix(q.data(), r.data(), metric, same_data(q, r), out.values);
  return out;
}

NeighborRanking knn(const EmbeddingSet& q, const EmbeddingSet& r, std::size_t k, bool exclude_self, Metric metric) {
  require(q.d() == r.d(), ErrorKind::DimMismatch, "query/reference dimensionality differs");
  require(k >= 1, ErrorKind::InvalidArgument, "k must be positive");
  if (exclude_self) require(q.n() == r.n(), ErrorKind::LengthMismatch, "exclude_self needs queries == references");
  const std::size_t available = exclude_self ? r.n() - 1 : r.n();
  require(k <= available, ErrorKind::KTooLarge,
          "k=" + std::to_string(k) + " exceeds " + std::to_string(available) + " available references");
  if (metric == Metric::cosine) {
    require_nonzero_rows(q);
    require_nonzero_rows(r);
  }
  NeighborRanking out;
  out.self_excluded = exclude_self;
  out.lists = kernels::omp::knn(q.data(), r.data(), k, exclude_self, same_data(q, r), metric);
  return out;
}

EmbeddingSet concat_columns(std::span<const EmbeddingSet> parts) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "nothing to concatenate");
  const std::size_t n = parts.front().n();
  std::size_t d = 0;
  for (const auto& p : parts) {
    require(p.n() == n, ErrorKind::LengthMismatch, "concatenated parts differ in sample count");
    d += p.d();
  }
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.row(i).begin();
    for (const auto& p : parts) dst = std::copy(p.row(i).begin(), p.row(i).end(), dst);
  }
  return EmbeddingSet(std::move(out));
}

}  // namespace dml
