#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "dml/error.hpp"
#include "dml/metrics.hpp"
#include "dml/model.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

bool empty_tuples(const MinedTuples& t) {
  if (const auto* p = std::get_if<MinedPairs>(&t)) return p->positives.empty() && p->negatives.empty();
  return std::get<MinedTriplets>(t).triplets.empty();
}

bool finite_output(const LossOutput& o) {
  if (!std::isfinite(o.value)) return false;
  for (double v : o.grad_embeddings.flat())
    if (!std::isfinite(v)) return false;
  return std::all_of(o.grad_params.begin(), o.grad_params.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void TrainConfig::validate() const {
  batch.validate();
  loss_params.validate();
  miner_params.validate();
  require(miner == MinerKind::none || accepts_miner(loss), ErrorKind::InvalidArgument,
          "loss '" + std::string(to_string(loss)) + "' cannot be combined with a miner");
  require(embed_dim >= 1, ErrorKind::InvalidArgument, "embed_dim must be >= 1");
  for (auto h : hidden) require(h >= 1, ErrorKind::InvalidArgument, "hidden widths must be >= 1");
  require(std::isfinite(lr) && lr >= 0.0, ErrorKind::InvalidArgument, "lr must be >= 0");
  require(rms_alpha >= 0.0 && rms_alpha < 1.0, ErrorKind::InvalidArgument, "rms_alpha must lie in [0, 1)");
  require(rms_eps >= 0.0, ErrorKind::InvalidArgument, "rms_eps must be >= 0");
  require(max_epochs >= 1, ErrorKind::InvalidArgument, "max_epochs must be >= 1");
  require(val_interval >= 1, ErrorKind::InvalidArgument, "val_interval must be >= 1");
  require(patience >= 1, ErrorKind::InvalidArgument, "patience must be >= 1");
  require(std::isfinite(min_delta) && min_delta >= 0.0, ErrorKind::InvalidArgument, "min_delta must be >= 0");
}

BatchSpec effective_batch(const BatchSpec& spec, std::size_t train_classes) {
  const std::size_t c = std::min(spec.classes, train_classes);
  require(c >= 2, ErrorKind::TooFewClasses, "training needs at least 2 classes");
  return {c, (spec.size() + c - 1) / c};
}

TrainResult fit_until_plateau(const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  cfg.validate();
  require(train.labels.size() == train.embeddings.n() && val.labels.size() == val.embeddings.n(),
          ErrorKind::LengthMismatch, "one label per sample expected");
  {
    const auto& a = train.labels.classes();
    const auto& b = val.labels.classes();
    std::vector<int> shared;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
    require(shared.empty(), ErrorKind::DisjointnessViolation,
            "train and validation share class " + (shared.empty() ? std::string() : std::to_string(shared[0])));
  }

  const std::size_t nc = train.labels.num_classes();
  const BatchSpec spec = effective_batch(cfg.batch, nc);
  std::vector<std::size_t> widths{train.embeddings.d()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.embed_dim);

  MlpEmbedder model = MlpEmbedder::he_uniform(widths, mix_seed(cfg.seed, 1));
  LossState loss_state = init_loss_state(cfg.loss, cfg.loss_params, nc, cfg.embed_dim, mix_seed(cfg.seed, 2));
  Rng rng = make_rng(cfg.seed, 3);
  RmspropState opt{{}, cfg.lr, cfg.rms_alpha, cfg.rms_eps, 0};
  RmspropState loss_opt{{}, cfg.loss_params.param_lr, cfg.rms_alpha, cfg.rms_eps, 0};

  TrainResult result;
  double reference = 0.0;
  std::size_t stale = 0;
  auto check = [&](std::size_t iteration) {
    const EmbeddingSet e(forward(model, val.embeddings.data()));
    const MetricReport r = evaluate_retrieval(e, val.labels);
    const double score = cfg.metric == ValidationMetric::map_at_r ? r.map_at_r : r.p_at_1;
    const bool first = result.val_map_at_r.empty();
    result.val_map_at_r.push_back(r.map_at_r);
    result.val_p_at_1.push_back(r.p_at_1);
    result.check_iterations.push_back(iteration);
    if (first || score > result.best_score) {
      result.best_score = score;
      result.best = model;
      result.best_loss_state = loss_state;
      result.best_check = result.val_map_at_r.size() - 1;
    }
    if (first || score > reference + cfg.min_delta) {
      reference = score;
      stale = 0;
    } else {
      ++stale;
    }
  };

  check(0);
  const std::size_t per_epoch = std::max<std::size_t>(1, train.embeddings.n() / spec.size());
  const auto& canonical = train.labels.canonical();
  ForwardCache cache;
  std::vector<int> batch_labels(spec.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && stale < cfg.patience; ++epoch) {
    for (std::size_t it = 0; it < per_epoch; ++it) {
      ++result.iterations;
      const auto idx = sample_batch(train.labels, spec, rng);
      const Matrix x = gather_rows(train.embeddings.data(), idx);
      for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = canonical[idx[i]];
      const Batch batch{forward(model, x, &cache), batch_labels};
      const auto mined = mine(cfg.miner, batch, cfg.miner_params, rng);
      if (mined && empty_tuples(*mined)) {
        ++result.skipped_batches;
        continue;
      }
      LossOutput out;
      try {
        out = compute_loss(cfg.loss, batch, cfg.loss_params, loss_state, mined ? &*mined : nullptr);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoPairs && e.kind() != ErrorKind::NoTriplets && e.kind() != ErrorKind::NoPositives)
          throw;
        ++result.skipped_batches;
        continue;
      }
      if (!finite_output(out)) {
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << result.iterations << " (loss " << to_string(cfg.loss)
            << ", value " << out.value << ", lr " << cfg.lr << ")";
        fail(ErrorKind::NonFiniteLoss, msg.str());
      }
      const auto grads = backward(model, cache, out.grad_embeddings);
      rmsprop_step(opt, model.mutable_params(), grads);
      if (!loss_state.params.empty()) {
        rmsprop_step(loss_opt, loss_state.params, out.grad_params);
        if (is_classification(cfg.loss)) renormalize_columns(loss_state);
      }
    }
    if (epoch % cfg.val_interval == 0) check(result.iterations);
  }
  return result;
}

}  // namespace dml
