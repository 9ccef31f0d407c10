#include <algorithm>
#include <set>
#include <string>

#include "dml/error.hpp"
#include "dml/protocol.hpp"

namespace dml {

ClassSplit class_split(std::span<const int> sorted_classes) {
  const std::size_t n = sorted_classes.size();
  require(n >= 8, ErrorKind::TooFewClasses, "class split needs at least 8 classes, got " + std::to_string(n));
  require(std::is_sorted(sorted_classes.begin(), sorted_classes.end()) &&
              std::adjacent_find(sorted_classes.begin(), sorted_classes.end()) == sorted_classes.end(),
          ErrorKind::InvalidArgument, "class ids must be sorted and distinct");
  const std::size_t half = (n + 1) / 2;
  return {{sorted_classes.begin(), sorted_classes.begin() + static_cast<std::ptrdiff_t>(half)},
          {sorted_classes.begin() + static_cast<std::ptrdiff_t>(half), sorted_classes.end()}};
}

ClassSplit class_split(const LabelSet& labels) { return class_split(labels.classes()); }

Fold FoldPlan::fold(std::size_t i) const {
  require(i < partitions.size(), ErrorKind::InvalidArgument, "fold index " + std::to_string(i) + " out of range");
  Fold f;
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    auto& dst = p == i ? f.val_classes : f.train_classes;
    dst.insert(dst.end(), partitions[p].begin(), partitions[p].end());
  }
  return f;
}

void FoldPlan::validate() const {
  require(partitions.size() == kNumFolds, ErrorKind::InvalidArgument, "a fold plan has exactly 4 partitions");
  std::set<int> seen(test_classes.begin(), test_classes.end());
  require(seen.size() == test_classes.size(), ErrorKind::DisjointnessViolation, "test classes repeat");
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    require(!partitions[p].empty(), ErrorKind::DisjointnessViolation, "partition " + std::to_string(p) + " is empty");
    for (int c : partitions[p])
      require(seen.insert(c).second, ErrorKind::DisjointnessViolation,
              "class " + std::to_string(c) + " appears in more than one of train/val/test");
  }
}

FoldPlan make_folds(std::span<const int> cv_classes, std::span<const int> test_classes) {
  const std::size_t n = cv_classes.size();
  require(n >= kNumFolds, ErrorKind::TooFewClasses, "4 folds need at least 4 classes, got " + std::to_string(n));
  FoldPlan plan;
  plan.test_classes.assign(test_classes.begin(), test_classes.end());
  std::size_t start = 0;
  for (std::size_t p = 0; p < kNumFolds; ++p) {
    const std::size_t size = n / kNumFolds + (p < n % kNumFolds ? 1 : 0);
    plan.partitions.emplace_back(cv_classes.begin() + static_cast<std::ptrdiff_t>(start),
                                 cv_classes.begin() + static_cast<std::ptrdiff_t>(start + size));
    start += size;
  }
  plan.validate();
  return plan;
}

FoldPlan make_fold_plan(const LabelSet& labels) {
  const ClassSplit split = class_split(labels);
  return make_folds(split.cv_classes, split.test_classes);
}

Dataset subset_by_classes(const Dataset& data, std::span<const int> classes) {
  const std::set<int> wanted(classes.begin(), classes.end());
  const auto& present = data.labels.classes();
  for (int c : wanted)
    require(std::binary_search(present.begin(), present.end(), c), ErrorKind::UnknownClass,
            "class " + std::to_string(c) + " has no samples");
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (wanted.count(data.labels[i])) {
      rows.push_back(i);
      labels.push_back(data.labels[i]);
    }
  }
  return {EmbeddingSet(gather_rows(data.embeddings.data(), rows)), LabelSet(std::move(labels))};
}

}  // namespace dml
