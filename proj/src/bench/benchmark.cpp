#include <cstdio>
#include <sstream>
#include <string>

#include "dml/bench.hpp"
#include "dml/error.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

std::string describe(const DatasetSource& src, const Dataset& data) {
  std::ostringstream out;
  if (src.path) {
    out << src.path->string();
  } else {
    const auto& s = *src.synthetic;
    out << "synthetic(classes=" << s.num_classes << ", dim=" << s.dim << ", per_class=" << s.samples_per_class
        << ", separation=" << s.separation << ", spread=" << s.spread << ", signal_dim=" << s.signal()
        << ", nuisance_spread=" << s.nuisance() << ", seed=" << s.seed << ")";
  }
  out << "; " << data.embeddings.n() << " samples, " << data.labels.num_classes() << " classes, dim "
      << data.embeddings.d();
  return out.str();
}

MetricSummary point_summary(const MetricReport& r) {
  return {{r.p_at_1, 0.0}, {r.r_precision, 0.0}, {r.map_at_r, 0.0}};
}

void note(const BenchOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

}  // namespace

double relative_improvement(double x, double base) {
  require(base != 0.0, ErrorKind::InvalidArgument, "relative improvement against a zero base");
  return 100.0 * (x - base) / base;
}

std::vector<RelativeImprovement> relative_improvements(const std::vector<ReportRow>& rows) {
  std::vector<RelativeImprovement> out;
  for (const char* base_loss : {"contrastive", "triplet"}) {
    const ReportRow* base = nullptr;
    for (const auto& r : rows)
      if (!r.error && r.loss == base_loss) {
        base = &r;
        break;
      }
    if (!base || base->concatenated.map_at_r.mean == 0.0 || base->concatenated.p_at_1.mean == 0.0) continue;
    for (const auto& r : rows) {
      if (r.error) continue;
      out.push_back({r.name, base->name, "map_at_r",
                     relative_improvement(r.concatenated.map_at_r.mean, base->concatenated.map_at_r.mean)});
      out.push_back({r.name, base->name, "p_at_1",
                     relative_improvement(r.concatenated.p_at_1.mean, base->concatenated.p_at_1.mean)});
    }
  }
  return out;
}

ReportRow baseline_row(const Dataset& data, const FoldPlan& plan, std::size_t embed_dim, bool pca) {
  const Dataset test = subset_by_classes(data, plan.test_classes);
  EmbeddingSet e = test.embeddings;
  if (pca && embed_dim < e.d()) e = pca_reduce(e, embed_dim);
  const MetricReport r = evaluate_retrieval(l2_normalize(e), test.labels);
  ReportRow row;
  row.name = "untrained";
  row.loss = "none";
  row.miner = "none";
  row.concatenated = point_summary(r);
  row.separated = row.concatenated;
  row.n_runs = 1;
  return row;
}

BenchmarkReport run_benchmark(const std::vector<BenchConfig>& configs, const BenchOptions& opts) {
  require(!configs.empty(), ErrorKind::InvalidArgument, "no configs to run");
  for (const auto& c : configs)
    require(c.dataset == configs.front().dataset, ErrorKind::ValidationError,
            "config '" + c.name + "' uses a different dataset than '" + configs.front().name + "'");

  const Dataset data = load_dataset(configs.front().dataset);
  const FoldPlan plan = make_fold_plan(data.labels);
  BenchmarkReport report;
  report.dataset = describe(configs.front().dataset, data);
  const auto& first = configs.front();
  report.baseline = baseline_row(data, plan, first.train.embed_dim, first.baseline_pca);
  report.baseline.config_hash = fnv1a_hex(report.dataset);

  for (const auto& cfg : configs) {
    ReportRow row;
    row.name = cfg.name;
    row.loss = std::string(to_string(cfg.train.loss));
    row.miner = std::string(to_string(cfg.train.miner));
    row.config_hash = cfg.hash;
    const auto dir = cfg.out_dir / cfg.name;
    try {
      if (opts.write_runs) {
        write_config_copy(dir, cfg.source_text);
        std::filesystem::remove(dir / "trials.jsonl");
      }
      TrainConfig best = cfg.train;
      if (!cfg.space.dims.empty()) {
        note(opts, cfg.name + ": searching " + std::to_string(cfg.budget) + " trials");
        SearchOptions so;
        so.budget = cfg.budget;
        so.strategy = cfg.strategy;
        so.seed = mix_seed(cfg.seed, 1);
        so.jobs = opts.jobs;
        so.on_trial = [&](const TrialRecord& t) {
          if (opts.write_runs) append_trial(dir, t);
          std::ostringstream msg;
          msg << cfg.name << ": trial " << t.index << " mean val MAP@R " << t.mean_score;
          note(opts, msg.str());
        };
        const SearchResult sr = hyperparameter_search(cfg.space, cfg.train, data, plan, so);
        row.trials = sr.trials.size();
        row.best_params = sr.best_trial().assignment;
        row.best_val_score = sr.best_trial().mean_score;
        best = apply_assignment(cfg.train, row.best_params);
      }
      note(opts, cfg.name + ": " + std::to_string(cfg.n_runs) + " final runs");
      FinalRunOptions fo;
      fo.n_runs = cfg.n_runs;
      fo.seed = mix_seed(cfg.seed, 2);
      fo.jobs = opts.jobs;
      fo.on_run = [&](std::size_t r, const CrossValidationResult& cv) {
        if (opts.write_runs && r == 0) save_fold_checkpoints(dir, cv, {{"config_hash", cfg.hash}});
      };
      const FinalResult f = final_runs(best, data, plan, fo);
      if (opts.write_runs) write_final(dir, f);
      if (cfg.space.dims.empty()) {
        double s = 0.0;
        for (double v : f.runs.front().fold_scores) s += v;
        row.best_val_score = s / static_cast<double>(f.runs.front().fold_scores.size());
      }
      row.concatenated = f.concatenated;
      row.separated = f.separated;
      row.n_runs = f.runs.size();
    } catch (const Error& e) {
      row.error = e.what();
      row.concatenated = row.separated = {};
      note(opts, cfg.name + ": failed: " + e.what());
    }
    report.rows.push_back(std::move(row));
  }
  report.relative = relative_improvements(report.rows);
  return report;
}

}  // namespace dml
