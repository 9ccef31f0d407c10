#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dml/embed_io.hpp"
#include "dml/protocol.hpp"

namespace dml {

/// Class centres on a sphere of radius `separation` in the first `signal_dim`
/// coordinates, redrawn until every pair is at least `separation` apart.
/// Samples add N(0, spread^2) on signal coordinates and N(0, nuisance^2) on
/// the remaining ones.
struct SyntheticSpec {
  std::size_t num_classes = 16;
  std::size_t dim = 20;
  std::size_t samples_per_class = 30;
  double separation = 3.0;
  double spread = 1.0;
  std::optional<std::size_t> signal_dim;  // default: dim
  std::optional<double> nuisance_spread;  // default: spread
  std::uint64_t seed = 0;

  std::size_t signal() const { return signal_dim.value_or(dim); }
  double nuisance() const { return nuisance_spread.value_or(spread); }
  void validate() const;  // ValidationError

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Labels 0..num_classes-1, samples grouped by class. SeparationInfeasible if
/// the centres cannot be placed.
LabeledEmbeddings synth_dataset(const SyntheticSpec& spec);

struct DatasetSource {
  std::optional<std::filesystem::path> path;
  std::optional<SyntheticSpec> synthetic;

  friend bool operator==(const DatasetSource&, const DatasetSource&) = default;
};

LabeledEmbeddings load_dataset(const DatasetSource& src);

struct BenchConfig {
  DatasetSource dataset;
  std::string name;  // report row label; defaults to the loss id
  TrainConfig train;
  HyperparamSpace space;  // empty: train.loss_params are used as given
  std::size_t budget = 50;
  SearchStrategy strategy = SearchStrategy::random;
  std::size_t n_runs = 10;
  std::uint64_t seed = 0;
  bool baseline_pca = true;
  std::filesystem::path out_dir = "runs";
  std::string source_text;  // the TOML this was read from, copied into run dirs
  std::string hash;         // of every field above except out_dir and source_text
};

nlohmann::json config_json(const BenchConfig& cfg);
/// FNV-1a 64 of `text`, as 16 hex digits.
std::string fnv1a_hex(std::string_view text);
void rehash(BenchConfig& cfg);

/// One config per loss entry (`loss` may be a string, a table or an array of
/// tables). ParseError on TOML syntax, ValidationError naming the offending
/// key path otherwise.
std::vector<BenchConfig> parse_configs(std::string_view toml_text, std::string_view source = "config");
std::vector<BenchConfig> load_configs(const std::filesystem::path& path);
/// ValidationError if the file defines more than one loss.
BenchConfig load_config(const std::filesystem::path& path);

struct ReportRow {
  std::string name;
  std::string loss;
  std::string miner;
  std::string config_hash;
  std::optional<std::string> error;  // row failed; summaries are zero
  MetricSummary concatenated;
  MetricSummary separated;
  std::size_t n_runs = 0;
  std::size_t trials = 0;
  Assignment best_params;
  double best_val_score = 0.0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct RelativeImprovement {
  std::string name;
  std::string base;
  std::string metric;  // "map_at_r" or "p_at_1", concatenated setting
  double percent = 0.0;

  friend bool operator==(const RelativeImprovement&, const RelativeImprovement&) = default;
};

struct BenchmarkReport {
  std::string dataset;
  ReportRow baseline;
  std::vector<ReportRow> rows;
  std::vector<RelativeImprovement> relative;

  friend bool operator==(const BenchmarkReport&, const BenchmarkReport&) = default;
};

/// 100 (x - base) / base. InvalidArgument when base is 0.
double relative_improvement(double x, double base);

/// Each successful row against the first successful contrastive and triplet
/// rows, on concatenated MAP@R then P@1. A base with a zero mean is skipped.
std::vector<RelativeImprovement> relative_improvements(const std::vector<ReportRow>& rows);

/// Raw test-class inputs (PCA to the embedding width when `pca` and the input
/// is wider), L2-normalized and scored. Both settings carry the same value with
/// zero half-width.
ReportRow baseline_row(const Dataset& data, const FoldPlan& plan, std::size_t embed_dim, bool pca);

struct BenchOptions {
  int jobs = 0;
  bool write_runs = true;  // per-row run directories under <out_dir>/<name>
  std::function<void(const std::string&)> log;
};

/// Search then final runs for every config, plus the baseline row. A failing
/// row is recorded with its error and the report is still produced.
/// ValidationError if the configs disagree on the dataset.
BenchmarkReport run_benchmark(const std::vector<BenchConfig>& configs, const BenchOptions& opts = {});

void to_json(nlohmann::json& j, const ReportRow& r);
void from_json(const nlohmann::json& j, ReportRow& r);
void to_json(nlohmann::json& j, const RelativeImprovement& r);
void from_json(const nlohmann::json& j, RelativeImprovement& r);
void to_json(nlohmann::json& j, const BenchmarkReport& r);
void from_json(const nlohmann::json& j, BenchmarkReport& r);

enum class ReportFormat { json, csv, markdown, plotdata };
std::string_view to_string(ReportFormat f);
/// Comma-separated list; ValidationError on unknown names.
std::vector<ReportFormat> parse_formats(std::string_view list);

std::string report_json(const BenchmarkReport& r);
std::string report_csv(const BenchmarkReport& r);
std::string report_markdown(const BenchmarkReport& r);
std::string report_plotdata(const BenchmarkReport& r);

/// Writes report.json / report.csv / report.md / plotdata.csv into `dir` and
/// returns the paths written. InvalidArgument for an empty report, IoError on
/// write failure.
std::vector<std::filesystem::path> emit_report(const BenchmarkReport& r, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats);
BenchmarkReport read_report(const std::filesystem::path& path);

struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Gradient checks for every loss and for MLP backward, the cosine-softmax
/// reduction identities, and serial/parallel metric agreement. Used by the
/// `check` command.
std::vector<CheckLine> self_check(std::uint64_t seed);

}  // namespace dml
