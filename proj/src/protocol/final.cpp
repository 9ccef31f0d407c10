#include <cmath>
#include <cstdio>
#include <string>

#include "dml/error.hpp"
#include "dml/protocol.hpp"
#include "dml/rng.hpp"

namespace dml {

MeanCi mean_ci(std::span<const double> values) {
  const std::size_t n = values.size();
  require(n >= 2, ErrorKind::InvalidArgument, "a confidence interval needs at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double s = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, 1.96 * s / std::sqrt(static_cast<double>(n))};
}

std::string format_ci(const MeanCi& ci, double scale) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", ci.mean * scale, ci.half_width * scale);
  return buf;
}

MetricSummary summarize(std::span<const MetricReport> runs) {
  std::vector<double> p, rp, map;
  for (const auto& r : runs) {
    p.push_back(r.p_at_1);
    rp.push_back(r.r_precision);
    map.push_back(r.map_at_r);
  }
  return {mean_ci(p), mean_ci(rp), mean_ci(map)};
}

FinalResult aggregate_runs(std::vector<RunReport> runs) {
  require(runs.size() >= 2, ErrorKind::InvalidArgument, "final results need at least 2 runs");
  std::vector<MetricReport> concat, sep;
  for (const auto& r : runs) {
    concat.push_back(r.concatenated);
    sep.push_back(r.separated);
  }
  FinalResult out;
  out.concatenated = summarize(concat);
  out.separated = summarize(sep);
  out.runs = std::move(runs);
  return out;
}

FinalResult final_runs(const TrainConfig& cfg, const Dataset& data, const FoldPlan& plan,
                       const FinalRunOptions& opts) {
  require(!plan.test_classes.empty(), ErrorKind::InvalidArgument, "fold plan has no test classes");
  std::vector<std::uint64_t> seeds = opts.seeds;
  if (seeds.empty())
    for (std::size_t r = 0; r < opts.n_runs; ++r) seeds.push_back(mix_seed(opts.seed, 0x5eed + r));
  require(seeds.size() >= 2, ErrorKind::InvalidArgument, "final runs need n_runs >= 2");
  const Dataset test = subset_by_classes(data, plan.test_classes);

  std::vector<RunReport> runs;
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = seeds[r];
    const auto cv = run_cross_validation(data, plan, run_cfg, opts.jobs);
    const auto ens = evaluate_ensemble(cv.checkpoints, test);
    runs.push_back({seeds[r], ens.concatenated, ens.separated, cv.fold_scores});
    if (opts.on_run) opts.on_run(r, cv);
  }
  return aggregate_runs(std::move(runs));
}

void to_json(nlohmann::json& j, const MeanCi& v) { j = {{"mean", v.mean}, {"half_width", v.half_width}}; }

void from_json(const nlohmann::json& j, MeanCi& v) {
  v.mean = j.at("mean").get<double>();
  v.half_width = j.at("half_width").get<double>();
}

void to_json(nlohmann::json& j, const MetricSummary& v) {
  j = {{"p_at_1", v.p_at_1}, {"r_precision", v.r_precision}, {"map_at_r", v.map_at_r}};
}

void from_json(const nlohmann::json& j, MetricSummary& v) {
  v.p_at_1 = j.at("p_at_1").get<MeanCi>();
  v.r_precision = j.at("r_precision").get<MeanCi>();
  v.map_at_r = j.at("map_at_r").get<MeanCi>();
}

void to_json(nlohmann::json& j, const RunReport& v) {
  j = {{"seed", v.seed},
       {"concatenated", v.concatenated},
       {"separated", v.separated},
       {"fold_scores", v.fold_scores}};
}

void from_json(const nlohmann::json& j, RunReport& v) {
  v.seed = j.at("seed").get<std::uint64_t>();
  v.concatenated = j.at("concatenated").get<MetricReport>();
  v.separated = j.at("separated").get<MetricReport>();
  v.fold_scores = j.at("fold_scores").get<std::vector<double>>();
}

void to_json(nlohmann::json& j, const FinalResult& v) {
  j = {{"runs", v.runs}, {"concatenated", v.concatenated}, {"separated", v.separated}};
}

void from_json(const nlohmann::json& j, FinalResult& v) {
  v.runs = j.at("runs").get<std::vector<RunReport>>();
  v.concatenated = j.at("concatenated").get<MetricSummary>();
  v.separated = j.at("separated").get<MetricSummary>();
}

}  // namespace dml
