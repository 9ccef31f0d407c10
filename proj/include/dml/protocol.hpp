#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dml/metrics.hpp"
#include "dml/model.hpp"

namespace dml {

inline constexpr std::size_t kNumFolds = 4;

struct ClassSplit {
  std::vector<int> cv_classes;
  std::vector<int> test_classes;
};

/// First ceil(n/2) classes (ascending id) go to cross-validation, the rest to
/// test. TooFewClasses below 8 classes.
ClassSplit class_split(const LabelSet& labels);
ClassSplit class_split(std::span<const int> sorted_classes);

struct Fold {
  std::vector<int> train_classes;
  std::vector<int> val_classes;
};

struct FoldPlan {
  std::vector<int> test_classes;
  std::vector<std::vector<int>> partitions;  // kNumFolds contiguous blocks

  /// Partition i validates, the other three train.
  Fold fold(std::size_t i) const;
  /// DisjointnessViolation if any two of train/val/test share a class in any
  /// fold, or a partition is empty.
  void validate() const;

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Contiguous quarters of `cv_classes`; the first (n mod 4) partitions get one
/// extra class. TooFewClasses below 4.
FoldPlan make_folds(std::span<const int> cv_classes, std::span<const int> test_classes = {});
FoldPlan make_fold_plan(const LabelSet& labels);

/// Samples whose class is in `classes`, in original order. UnknownClass if a
/// listed class has no samples.
Dataset subset_by_classes(const Dataset& data, std::span<const int> classes);

struct CrossValidationResult {
  std::vector<MlpEmbedder> checkpoints;
  std::vector<double> fold_scores;  // best validation score per fold
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> val_series;  // MAP@R per check, per fold
  double mean_score = 0.0;
};

/// Seed for fold i of a run seeded with `seed`.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

/// Trains one model per fold. Folds run in parallel on up to `jobs` threads
/// (0 = OpenMP default); results do not depend on `jobs`. Errors are rethrown
/// with the same kind and the fold index prepended.
CrossValidationResult run_cross_validation(const Dataset& data, const FoldPlan& plan, const TrainConfig& cfg,
                                           int jobs = 0);

struct EnsembleReport {
  MetricReport concatenated;
  MetricReport separated;
  std::size_t concatenated_dim = 0;
};

/// Concatenates the (normalized) model outputs, L2-normalizes and scores;
/// separately scores each model and averages field-wise. DimMismatch if the
/// models disagree on input or output width.
EnsembleReport evaluate_ensemble(std::span<const MlpEmbedder> models, const Dataset& test);
EmbeddingSet concatenated_embedding(std::span<const MlpEmbedder> models, const EmbeddingSet& inputs);

// ---- hyperparameter search ----

using ParamValue = std::variant<double, std::string>;
using Assignment = std::map<std::string, ParamValue>;

struct Dimension {
  enum class Kind { continuous, log_continuous, categorical };
  std::string name;
  Kind kind = Kind::continuous;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::string> choices;

  friend bool operator==(const Dimension&, const Dimension&) = default;
};

std::string_view to_string(Dimension::Kind kind);
Dimension::Kind parse_dimension_kind(std::string_view name);

struct HyperparamSpace {
  std::vector<Dimension> dims;

  /// EmptySpace without dimensions; ValidationError for lo >= hi, log ranges
  /// that are not positive, empty choices or repeated names.
  void validate() const;
  Assignment sample(Rng& rng) const;
  /// Coordinates in [0,1] per continuous dim, one-hot per categorical.
  std::vector<double> encode(const Assignment& a) const;
  bool categorical_only() const;

  friend bool operator==(const HyperparamSpace&, const HyperparamSpace&) = default;
};

/// Sets `lr`, `miner`, `epsilon`, `semihard_margin`, `clamp_min` or any loss
/// parameter name. Categorical values are parsed as numbers for numeric
/// fields. ValidationError for unknown names or unparsable values.
TrainConfig apply_assignment(TrainConfig cfg, const Assignment& a);

struct TrialRecord {
  std::size_t index = 0;
  Assignment assignment;
  std::vector<double> fold_scores;
  double mean_score = 0.0;
  std::vector<std::uint64_t> seeds;
  double wall_seconds = 0.0;
  std::optional<std::string> error;  // training diverged; scored 0
};

void to_json(nlohmann::json& j, const TrialRecord& t);
void from_json(const nlohmann::json& j, TrialRecord& t);
void to_json(nlohmann::json& j, const ParamValue& v);

enum class SearchStrategy { random, model_based };
std::string_view to_string(SearchStrategy s);
SearchStrategy parse_strategy(std::string_view name);

struct SearchOptions {
  std::size_t budget = 50;
  SearchStrategy strategy = SearchStrategy::random;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::size_t initial_random = 3;  // model_based: random trials before the surrogate
  std::size_t candidates = 512;    // model_based: random candidates scored by EI
  std::function<void(const TrialRecord&)> on_trial;
};

struct SearchResult {
  std::vector<TrialRecord> trials;
  std::size_t best = 0;
  const TrialRecord& best_trial() const { return trials.at(best); }
};

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax_score(std::span<const double> scores);

/// Every trial trains with the same seed so trials differ only in their
/// parameters. A trial whose training diverges (NonFiniteLoss, ZeroVector)
/// is recorded with score 0; other errors propagate. Deterministic given
/// `opts.seed`.
SearchResult hyperparameter_search(const HyperparamSpace& space, const TrainConfig& base, const Dataset& data,
                                   const FoldPlan& plan, const SearchOptions& opts);

/// Gaussian-process expected improvement (RBF kernel on encoded points,
/// standardized scores). Exposed for testing.
std::vector<double> expected_improvement(const std::vector<std::vector<double>>& xs, std::span<const double> ys,
                                         const std::vector<std::vector<double>>& candidates,
                                         double length_scale = 0.3);

// ---- final runs ----

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
  friend bool operator==(const MeanCi&, const MeanCi&) = default;
};

/// Mean and 1.96 s / sqrt(n) with the n-1 sample deviation. InvalidArgument
/// below two values.
MeanCi mean_ci(std::span<const double> values);

/// "mean ± hw" of the values multiplied by `scale`, 2 decimals.
std::string format_ci(const MeanCi& ci, double scale = 100.0);

struct MetricSummary {
  MeanCi p_at_1;
  MeanCi r_precision;
  MeanCi map_at_r;
  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

MetricSummary summarize(std::span<const MetricReport> runs);

struct RunReport {
  std::uint64_t seed = 0;
  MetricReport concatenated;
  MetricReport separated;
  std::vector<double> fold_scores;
  friend bool operator==(const RunReport&, const RunReport&) = default;
};

struct FinalResult {
  std::vector<RunReport> runs;
  MetricSummary concatenated;
  MetricSummary separated;
  friend bool operator==(const FinalResult&, const FinalResult&) = default;
};

/// Aggregates already-computed runs. InvalidArgument below two runs.
FinalResult aggregate_runs(std::vector<RunReport> runs);

struct FinalRunOptions {
  std::size_t n_runs = 10;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // overrides the derived per-run seeds when non-empty
  int jobs = 0;
  std::function<void(std::size_t run, const CrossValidationResult&)> on_run;
};

/// Cross-validation plus ensemble evaluation on the test classes, repeated
/// with a distinct seed per run.
FinalResult final_runs(const TrainConfig& cfg, const Dataset& data, const FoldPlan& plan,
                       const FinalRunOptions& opts);

void to_json(nlohmann::json& j, const MeanCi& v);
void from_json(const nlohmann::json& j, MeanCi& v);
void to_json(nlohmann::json& j, const MetricSummary& v);
void from_json(const nlohmann::json& j, MetricSummary& v);
void to_json(nlohmann::json& j, const RunReport& v);
void from_json(const nlohmann::json& j, RunReport& v);
void to_json(nlohmann::json& j, const FinalResult& v);
void from_json(const nlohmann::json& j, FinalResult& v);

// ---- run directory ----
// <dir>/config.toml, <dir>/trials.jsonl, <dir>/folds/<i>/checkpoint,
// <dir>/final.json

void write_config_copy(const std::filesystem::path& dir, const std::string& config_text);
void append_trial(const std::filesystem::path& dir, const TrialRecord& t);
void save_fold_checkpoints(const std::filesystem::path& dir, const CrossValidationResult& cv,
                           const nlohmann::json& sidecar = nlohmann::json::object());
void write_final(const std::filesystem::path& dir, const FinalResult& f);
FinalResult read_final(const std::filesystem::path& dir);

}  // namespace dml
