#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <variant>
#include <vector>

namespace dml {

// Index pairs into a batch. Positives share a label, negatives do not.
struct MinedPairs {
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  std::vector<std::pair<std::size_t, std::size_t>> negatives;
  bool operator==(const MinedPairs&) const = default;
};

// (anchor, positive, negative)
struct MinedTriplets {
  std::vector<std::array<std::size_t, 3>> triplets;
  bool operator==(const MinedTriplets&) const = default;
};

using MinedTuples = std::variant<MinedPairs, MinedTriplets>;

// Split every triplet into its (a,p) and (a,n) pairs, duplicates removed.
MinedPairs to_pairs(const MinedTriplets& t);

// Cross every positive pair of an anchor with every negative pair of the same anchor.
MinedTriplets to_triplets(const MinedPairs& p);

}  // namespace dml
