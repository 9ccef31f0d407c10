#include <cmath>
#include <string>

#include "dml/bench.hpp"
#include "dml/error.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

constexpr int kRestarts = 50;
constexpr int kDrawsPerCentre = 1000;

}  // namespace

void SyntheticSpec::validate() const {
  require(num_classes >= 8, ErrorKind::ValidationError, "synthetic.num_classes must be >= 8");
  require(dim >= 1, ErrorKind::ValidationError, "synthetic.dim must be >= 1");
  require(samples_per_class >= 2, ErrorKind::ValidationError, "synthetic.samples_per_class must be >= 2");
  require(std::isfinite(separation) && separation > 0.0, ErrorKind::ValidationError,
          "synthetic.separation must be > 0");
  require(std::isfinite(spread) && spread > 0.0, ErrorKind::ValidationError, "synthetic.spread must be > 0");
  require(signal() >= 1 && signal() <= dim, ErrorKind::ValidationError, "synthetic.signal_dim must lie in [1, dim]");
  require(std::isfinite(nuisance()) && nuisance() >= 0.0, ErrorKind::ValidationError,
          "synthetic.nuisance_spread must be >= 0");
}

LabeledEmbeddings synth_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t k = spec.num_classes;
  const std::size_t s = spec.signal();
  Rng rng = make_rng(spec.seed, 0xda7a);
  std::normal_distribution<double> g(0.0, 1.0);

  Matrix centres(k, s);
  bool placed = false;
  for (int restart = 0; restart < kRestarts && !placed; ++restart) {
    std::size_t c = 0;
    for (; c < k; ++c) {
      bool ok = false;
      for (int draw = 0; draw < kDrawsPerCentre && !ok; ++draw) {
        auto row = centres.row(c);
        double norm = 0.0;
        while (norm < 1e-12) {
          for (double& v : row) v = g(rng);
          norm = std::sqrt(squared_norm(row));
        }
        for (double& v : row) v *= spec.separation / norm;
        ok = true;
        for (std::size_t p = 0; p < c && ok; ++p) {
          double d2 = 0.0;
          for (std::size_t j = 0; j < s; ++j) d2 += (row[j] - centres(p, j)) * (row[j] - centres(p, j));
          ok = std::sqrt(d2) >= spec.separation;
        }
      }
      if (!ok) break;
    }
    placed = c == k;
  }
  require(placed, ErrorKind::SeparationInfeasible,
          "cannot place " + std::to_string(k) + " centres " + std::to_string(spec.separation) + " apart in " +
              std::to_string(s) + " dimensions");

  const std::size_t n = k * spec.samples_per_class;
  Matrix x(n, spec.dim);
  std::vector<int> labels;
  labels.reserve(n);
  std::size_t r = 0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++r) {
      for (std::size_t j = 0; j < spec.dim; ++j)
        x(r, j) = j < s ? centres(c, j) + spec.spread * g(rng) : spec.nuisance() * g(rng);
      labels.push_back(static_cast<int>(c));
    }
  return {EmbeddingSet(std::move(x)), LabelSet(std::move(labels))};
}

LabeledEmbeddings load_dataset(const DatasetSource& src) {
  require(src.path.has_value() != src.synthetic.has_value(), ErrorKind::ValidationError,
          "dataset: give exactly one of path or synthetic");
  if (src.path) return read_embeddings(*src.path);
  return synth_dataset(*src.synthetic);
}

}  // namespace dml
