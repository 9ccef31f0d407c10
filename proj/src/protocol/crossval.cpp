#include <exception>
#include <string>
#include <string_view>

#include <omp.h>

#include "dml/error.hpp"
#include "dml/protocol.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

[[noreturn]] void rethrow_with_fold(std::size_t fold, const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    std::string_view msg = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    if (msg.starts_with(prefix)) msg.remove_prefix(prefix.size());
    fail(e.kind(), "fold " + std::to_string(fold) + ": " + std::string(msg));
  } catch (const std::exception& e) {
    throw std::runtime_error("fold " + std::to_string(fold) + ": " + e.what());
  }
}

}  // namespace

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return mix_seed(seed, 0xf01d + fold); }

CrossValidationResult run_cross_validation(const Dataset& data, const FoldPlan& plan, const TrainConfig& cfg,
                                           int jobs) {
  plan.validate();
  cfg.validate();
  std::vector<Dataset> train(kNumFolds), val(kNumFolds);
  for (std::size_t i = 0; i < kNumFolds; ++i) {
    const Fold f = plan.fold(i);
    train[i] = subset_by_classes(data, f.train_classes);
    val[i] = subset_by_classes(data, f.val_classes);
  }

  std::vector<TrainResult> results(kNumFolds);
  std::vector<std::exception_ptr> errors(kNumFolds);
  CrossValidationResult out;
  for (std::size_t i = 0; i < kNumFolds; ++i) out.seeds.push_back(fold_seed(cfg.seed, i));
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (std::size_t i = 0; i < kNumFolds; ++i) {
    try {
      TrainConfig fold_cfg = cfg;
      fold_cfg.seed = out.seeds[i];
      results[i] = fit_until_plateau(train[i], val[i], fold_cfg);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < kNumFolds; ++i)
    if (errors[i]) rethrow_with_fold(i, errors[i]);

  double sum = 0.0;
  for (auto& r : results) {
    out.checkpoints.push_back(std::move(r.best));
    out.fold_scores.push_back(r.best_score);
    out.val_series.push_back(std::move(r.val_map_at_r));
    sum += out.fold_scores.back();
  }
  out.mean_score = sum / static_cast<double>(kNumFolds);
  return out;
}

EmbeddingSet concatenated_embedding(std::span<const MlpEmbedder> models, const EmbeddingSet& inputs) {
  require(!models.empty(), ErrorKind::InvalidArgument, "no models to concatenate");
  std::vector<EmbeddingSet> parts;
  for (const auto& m : models) {
    require(m.input_dim() == inputs.d() && m.output_dim() == models.front().output_dim(), ErrorKind::DimMismatch,
            "ensemble members must share input and output widths");
    parts.push_back(embed(m, inputs));
  }
  return l2_normalize(concat_columns(parts));
}

EnsembleReport evaluate_ensemble(std::span<const MlpEmbedder> models, const Dataset& test) {
  EnsembleReport out;
  const EmbeddingSet joined = concatenated_embedding(models, test.embeddings);
  out.concatenated_dim = joined.d();
  out.concatenated = evaluate_retrieval(joined, test.labels);

  MetricReport& sep = out.separated;
  for (const auto& m : models) {
    const MetricReport r = evaluate_retrieval(embed(m, test.embeddings), test.labels);
    sep.p_at_1 += r.p_at_1;
    sep.r_precision += r.r_precision;
    sep.map_at_r += r.map_at_r;
    sep.n_queries_evaluated = r.n_queries_evaluated;
    sep.n_queries_skipped = r.n_queries_skipped;
  }
  const double k = static_cast<double>(models.size());
  sep.p_at_1 /= k;
  sep.r_precision /= k;
  sep.map_at_r /= k;
  return out;
}

}  // namespace dml
