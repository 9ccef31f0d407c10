// dmlbench: command-line front end for the metric-learning benchmark.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dml/bench.hpp"
#include "dml/error.hpp"
#include "dml/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

int exit_code(dml::ErrorKind k) {
  switch (k) {
    case dml::ErrorKind::ValidationError:
    case dml::ErrorKind::ParseError:
    case dml::ErrorKind::UnknownKind:
    case dml::ErrorKind::InvalidArgument:
    case dml::ErrorKind::EmptySpace:
      return kValidation;
    default:
      return kRuntime;
  }
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) dml::fail(dml::ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

struct Common {
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
};

void add_jobs(CLI::App* app, Common& c) {
  app->add_option("--jobs", c.jobs, "worker threads for folds (0 = all cores)")->envname("BENCH_JOBS")->check(CLI::NonNegativeNumber);
}

dml::BenchConfig single_config(const fs::path& path, const Common& c) {
  dml::BenchConfig cfg = dml::load_config(path);
  if (c.out) cfg.out_dir = *c.out;
  if (c.seed) {
    cfg.seed = *c.seed;
    dml::rehash(cfg);
  }
  return cfg;
}

json metric_json(const dml::MetricReport& r) { return r; }

// ---- verbs ----

int cmd_evaluate(const fs::path& input, const std::string& metric, bool clustering, std::uint64_t seed,
                 const std::optional<fs::path>& out) {
  const auto data = dml::read_embeddings(input);
  dml::MetricReport r = dml::evaluate_retrieval(data.embeddings, data.labels, dml::parse_metric(metric));
  if (clustering) {
    const auto q = dml::clustering_scores(data.embeddings, data.labels, seed);
    r.nmi = q.nmi;
    r.ami = q.ami;
    r.f1 = q.f1;
  }
  const std::string text = metric_json(r).dump(2) + "\n";
  if (out)
    write_text(*out, text);
  else
    std::cout << text;
  return kOk;
}

int cmd_train(const fs::path& config, const Common& c) {
  const dml::BenchConfig cfg = single_config(config, c);
  const auto data = dml::load_dataset(cfg.dataset);
  const auto plan = dml::make_fold_plan(data.labels);
  dml::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const fs::path dir = cfg.out_dir / cfg.name;
  dml::write_config_copy(dir, cfg.source_text);
  log_line(cfg.name + ": training " + std::to_string(dml::kNumFolds) + " folds");
  const auto cv = dml::run_cross_validation(data, plan, tc, c.jobs);
  dml::save_fold_checkpoints(dir, cv, {{"config_hash", cfg.hash}});
  const auto ens = dml::evaluate_ensemble(cv.checkpoints, dml::subset_by_classes(data, plan.test_classes));
  const json j = {{"name", cfg.name},
                  {"config_hash", cfg.hash},
                  {"fold_scores", cv.fold_scores},
                  {"fold_seeds", cv.seeds},
                  {"mean_val_score", cv.mean_score},
                  {"concatenated", metric_json(ens.concatenated)},
                  {"separated", metric_json(ens.separated)},
                  {"concatenated_dim", ens.concatenated_dim}};
  write_text(dir / "train.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_sweep(const fs::path& config, const Common& c) {
  const dml::BenchConfig cfg = single_config(config, c);
  if (cfg.space.dims.empty()) dml::fail(dml::ErrorKind::EmptySpace, cfg.name + ": config has no search space");
  const auto data = dml::load_dataset(cfg.dataset);
  const auto plan = dml::make_fold_plan(data.labels);
  const fs::path dir = cfg.out_dir / cfg.name;
  dml::write_config_copy(dir, cfg.source_text);
  fs::remove(dir / "trials.jsonl");
  dml::SearchOptions so;
  so.budget = cfg.budget;
  so.strategy = cfg.strategy;
  so.seed = dml::mix_seed(cfg.seed, 1);
  so.jobs = c.jobs;
  so.on_trial = [&](const dml::TrialRecord& t) {
    dml::append_trial(dir, t);
    log_line(cfg.name + ": trial " + std::to_string(t.index) + " mean val MAP@R " + std::to_string(t.mean_score) +
             (t.error ? " (" + *t.error + ")" : ""));
  };
  const auto sr = dml::hyperparameter_search(cfg.space, cfg.train, data, plan, so);
  const json best = sr.best_trial();
  write_text(dir / "best.json", best.dump(2) + "\n");
  std::cout << best.dump(2) << '\n';
  return kOk;
}

int cmd_bench(const std::vector<fs::path>& configs, const Common& c, const std::string& formats) {
  const auto fmts = dml::parse_formats(formats);
  std::vector<dml::BenchConfig> all;
  for (const auto& p : configs)
    for (auto& cfg : dml::load_configs(p)) all.push_back(std::move(cfg));
  for (auto& cfg : all) {
    if (c.out) cfg.out_dir = *c.out;
    if (c.seed) {
      cfg.seed = *c.seed;
      dml::rehash(cfg);
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (all[i].name == all[j].name)
        dml::fail(dml::ErrorKind::ValidationError, "duplicate row name '" + all[i].name + "' across configs");
  dml::BenchOptions opts;
  opts.jobs = c.jobs;
  opts.log = log_line;
  const auto report = dml::run_benchmark(all, opts);
  for (const auto& p : dml::emit_report(report, all.front().out_dir, fmts)) log_line("wrote " + p.string());
  bool failed = false;
  for (const auto& row : report.rows) failed = failed || row.error.has_value();
  return failed ? kRuntime : kOk;
}

int cmd_report(const fs::path& input, const fs::path& out, const std::string& formats) {
  const auto fmts = dml::parse_formats(formats);
  const auto report = dml::read_report(input);
  for (const auto& p : dml::emit_report(report, out, fmts)) log_line("wrote " + p.string());
  return kOk;
}

int cmd_synth(const std::optional<fs::path>& config, dml::SyntheticSpec spec, const std::optional<std::uint64_t>& seed,
              const fs::path& out) {
  if (config) {
    const dml::BenchConfig cfg = dml::load_configs(*config).front();
    if (!cfg.dataset.synthetic)
      dml::fail(dml::ErrorKind::ValidationError, config->string() + ": dataset is not synthetic");
    spec = *cfg.dataset.synthetic;
  }
  if (seed) spec.seed = *seed;
  spec.validate();
  const auto data = dml::synth_dataset(spec);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (out.extension() == ".csv")
    dml::write_embeddings_csv(out, data.embeddings, data.labels);
  else
    dml::write_embeddings_binary(out, data.embeddings, data.labels);
  log_line("wrote " + out.string() + " (" + std::to_string(data.embeddings.n()) + " samples)");
  return kOk;
}

int cmd_check(std::uint64_t seed) {
  bool ok = true;
  for (const auto& line : dml::self_check(seed)) {
    std::cout << (line.passed ? "PASS " : "FAIL ") << line.name << ": " << line.detail << '\n';
    ok = ok && line.passed;
  }
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric-learning benchmark: training, search, evaluation and reports"};
  app.require_subcommand(1);

  Common common;
  std::vector<fs::path> configs;
  fs::path config, input;
  std::optional<fs::path> out_file, synth_config;
  fs::path out_dir;
  std::string metric = "euclidean", formats = "json,csv,markdown,plotdata";
  bool clustering = false;
  std::uint64_t eval_seed = 0, check_seed = 0;
  dml::SyntheticSpec spec;
  std::optional<std::uint64_t> synth_seed;

  auto* evaluate = app.add_subcommand("evaluate", "retrieval (and optionally clustering) metrics for an embedding file");
  evaluate->add_option("--input", input, "embedding file, CSV or EMB1")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--metric", metric, "euclidean or cosine")->check(CLI::IsMember({"euclidean", "cosine"}));
  evaluate->add_flag("--clustering", clustering, "also run k-means and report NMI, AMI and F1");
  evaluate->add_option("--seed", eval_seed, "k-means seed");
  evaluate->add_option("--out", out_file, "write JSON here instead of stdout");

  auto* train = app.add_subcommand("train", "cross-validate one config and score the ensemble on the test classes");
  train->add_option("--config", config, "TOML config with a single loss")->required()->check(CLI::ExistingFile);
  train->add_option("--out", common.out, "output directory (overrides the config)");
  train->add_option("--seed", common.seed, "seed (overrides the config)");
  add_jobs(train, common);

  auto* sweep = app.add_subcommand("sweep", "hyperparameter search for one config");
  sweep->add_option("--config", config, "TOML config with a single loss")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", common.out, "output directory (overrides the config)");
  sweep->add_option("--seed", common.seed, "seed (overrides the config)");
  add_jobs(sweep, common);

  auto* bench = app.add_subcommand("bench", "search, final runs and report for every loss");
  bench->add_option("--config", configs, "TOML config; repeatable")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", common.out, "output directory (overrides the configs)");
  bench->add_option("--seed", common.seed, "seed (overrides the configs)");
  bench->add_option("--format", formats, "comma-separated subset of json,csv,markdown,plotdata");
  add_jobs(bench, common);

  auto* report = app.add_subcommand("report", "re-emit a saved report.json");
  report->add_option("--input", input, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out_dir, "output directory")->required();
  report->add_option("--format", formats, "comma-separated subset of json,csv,markdown,plotdata");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", synth_config, "read the dataset from a config's [dataset.synthetic]")->check(CLI::ExistingFile);
  synth->add_option("--classes", spec.num_classes, "number of classes");
  synth->add_option("--dim", spec.dim, "input dimension");
  synth->add_option("--per-class", spec.samples_per_class, "samples per class");
  synth->add_option("--separation", spec.separation, "minimum centre distance");
  synth->add_option("--spread", spec.spread, "within-class standard deviation on signal coordinates");
  synth->add_option("--signal-dim", spec.signal_dim, "coordinates carrying class centres");
  synth->add_option("--nuisance-spread", spec.nuisance_spread, "standard deviation on the other coordinates");
  synth->add_option("--seed", synth_seed, "seed");
  synth->add_option("--out", out_dir, "output file; .csv for CSV, anything else EMB1")->required();

  auto* check = app.add_subcommand("check", "gradient and invariant self-test suite");
  check->add_option("--seed", check_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*evaluate) return cmd_evaluate(input, metric, clustering, eval_seed, out_file);
    if (*train) return cmd_train(config, common);
    if (*sweep) return cmd_sweep(config, common);
    if (*bench) return cmd_bench(configs, common, formats);
    if (*report) return cmd_report(input, out_dir, formats);
    if (*synth) return cmd_synth(synth_config, spec, synth_seed, out_dir);
    if (*check) return cmd_check(check_seed);
  } catch (const dml::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
