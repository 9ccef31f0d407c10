#pragma once

#include <random>
#include <vector>

#include "dml/embed_io.hpp"
#include "oracles.hpp"

namespace dml::testing {

// Class c is centred at radius * (random unit direction); samples add
// isotropic noise. Labels are the given ids.
inline LabeledEmbeddings gaussian_classes(const std::vector<int>& classes, std::size_t per_class, std::size_t dim,
                                          double radius, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix centres = random_unit_rows(rng, classes.size(), dim);
  std::normal_distribution<double> g(0.0, noise);
  Matrix m(classes.size() * per_class, dim);
  std::vector<int> labels;
  std::size_t r = 0;
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (std::size_t k = 0; k < dim; ++k) m(r, k) = radius * centres(c, k) + g(rng);
      labels.push_back(classes[c]);
    }
  return {EmbeddingSet(std::move(m)), LabelSet(std::move(labels))};
}

inline std::vector<int> iota_classes(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

}  // namespace dml::testing
