#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dml/embedcore.hpp"
#include "dml/losses.hpp"
#include "dml/rng.hpp"
#include "dml/tuples.hpp"

namespace dml {

// C classes per batch, M samples per class.
struct BatchSpec {
  std::size_t classes = 8;
  std::size_t per_class = 4;

  std::size_t size() const { return classes * per_class; }
  void validate() const;  // InvalidArgument
  bool operator==(const BatchSpec&) const = default;
};

// C distinct classes drawn without replacement, then M indices from each.
// Classes smaller than M are sampled with replacement. Output is grouped by
// class in draw order.
std::vector<std::size_t> sample_batch(const LabelSet& labels, const BatchSpec& spec, Rng& rng);

enum class MinerKind { none, multisimilarity, semihard, distance_weighted };

std::string_view to_string(MinerKind k);
MinerKind parse_miner(std::string_view id);  // UnknownKind

struct MinerParams {
  double epsilon = 0.1;          // multisimilarity
  double semihard_margin = 0.1;  // semihard
  double clamp_min = 0.5;        // distance_weighted
  void validate() const;
  bool operator==(const MinerParams&) const = default;
};

// Cosine similarities. Negative n of anchor a is kept when
// s_an > min_p s_ap - eps; positive p is kept when s_ap < max_n s_an + eps.
MinedPairs multisimilarity_miner(const Batch& b, double epsilon);

// Euclidean distances; keeps d_ap < d_an < d_ap + m.
MinedTriplets semihard_triplet_miner(const Batch& b, double margin);

// Selection probabilities over candidate negatives at the given distances,
// proportional to 1/q(d) with q the distance density of uniform points on the
// unit sphere in `dim` dimensions. Distances are clamped to [clamp_min, 2).
std::vector<double> distance_weights(std::span<const double> distances, std::size_t dim, double clamp_min);

// One negative per (anchor, positive), drawn with distance_weights.
MinedTriplets distance_weighted_sampler(const Batch& b, double clamp_min, Rng& rng);

// nullopt for MinerKind::none.
std::optional<MinedTuples> mine(MinerKind k, const Batch& b, const MinerParams& p, Rng& rng);

}  // namespace dml
