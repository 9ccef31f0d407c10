#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "dml/bench.hpp"
#include "dml/error.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

constexpr double kStep = 1e-6;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Batch clustered(Rng& rng, std::size_t classes, std::size_t per_class, std::size_t dim, double noise) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix centres(classes, dim);
  for (double& v : centres.flat()) v = g(rng);
  Batch b{Matrix(classes * per_class, dim), {}};
  for (std::size_t c = 0; c < classes; ++c) {
    const double cn = std::sqrt(squared_norm(centres.row(c)));
    for (std::size_t m = 0; m < per_class; ++m) {
      auto r = b.embeddings.row(c * per_class + m);
      for (std::size_t k = 0; k < dim; ++k) r[k] = centres(c, k) / cn + noise * g(rng);
      const double n = std::sqrt(squared_norm(r));
      for (double& v : r) v /= n;
      b.labels.push_back(static_cast<int>(c));
    }
  }
  return b;
}

LossParams check_params(LossKind k) {
  LossParams p = default_params(k);
  if (k == LossKind::margin || k == LossKind::margin_per_class) p.beta_init = 0.9;
  return p;
}

// Worst relative error over `batches` kink-free random batches.
double loss_gradient_error(LossKind k, Rng& rng, int batches) {
  double worst = 0.0;
  const double tol = k == LossKind::fastap ? 1e-3 : 1e-4;
  int done = 0;
  for (int attempt = 0; done < batches && attempt < 50 * batches; ++attempt) {
    const Batch b = clustered(rng, 4, 3, 6, 0.6);
    const LossParams p = check_params(k);
    const LossState s = init_loss_state(k, p, 4, 6, rng());
    try {
      worst = std::max(worst, gradient_check(k, b, p, s, kStep, tol).max_relative_error);
      ++done;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::KinkProximity) throw;
    }
  }
  return done == batches ? worst : std::numeric_limits<double>::infinity();
}

double mlp_gradient_error(LossKind k, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const std::size_t classes = is_classification(k) ? 4 : 3;
    const std::size_t per = is_classification(k) ? 2 : 3;
    const MlpEmbedder m = MlpEmbedder::he_uniform({5, 12, 4}, rng());
    Matrix x(classes * per, 5);
    for (double& v : x.flat()) v = g(rng);
    std::vector<int> labels;
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t i = 0; i < per; ++i) labels.push_back(static_cast<int>(c));
    const LossParams p = check_params(k);
    const LossState s = init_loss_state(k, p, classes, 4, rng());
    ForwardCache cache;
    const LossOutput out = compute_loss(k, Batch{forward(m, x, &cache), labels}, p, s);
    double relu_slack = std::numeric_limits<double>::infinity();
    for (double z : cache.pre[0].flat()) relu_slack = std::min(relu_slack, std::abs(z));
    if (relu_slack < 1e-3 || out.kink_slack < 1e-3) continue;
    const auto analytic = backward(m, cache, out.grad_embeddings);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      MlpEmbedder up = m, down = m;
      up.mutable_params()[i] += kStep;
      down.mutable_params()[i] -= kStep;
      const double numeric = (compute_loss(k, Batch{forward(up, x), labels}, p, s).value -
                              compute_loss(k, Batch{forward(down, x), labels}, p, s).value) /
                             (2 * kStep);
      diff = std::max(diff, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
    }
    return scale > 0.0 ? diff / scale : 0.0;
  }
  return std::numeric_limits<double>::infinity();
}

double reduction_gap(Rng& rng, int batches) {
  double worst = 0.0;
  for (int t = 0; t < batches; ++t) {
    const Batch b = clustered(rng, 4, 3, 6, 0.8);
    LossParams p = default_params(LossKind::normalized_softmax);
    p.class_margin = 0.0;
    const LossState s = init_loss_state(LossKind::normalized_softmax, p, 4, 6, rng());
    const auto ns = compute_loss(LossKind::normalized_softmax, b, p, s);
    for (LossKind k : {LossKind::cosface, LossKind::arcface}) {
      const auto o = compute_loss(k, b, p, s);
      worst = std::max(worst, std::abs(o.value - ns.value));
      for (std::size_t i = 0; i < o.grad_embeddings.flat().size(); ++i)
        worst = std::max(worst, std::abs(o.grad_embeddings.flat()[i] - ns.grad_embeddings.flat()[i]));
      for (std::size_t i = 0; i < o.grad_params.size(); ++i)
        worst = std::max(worst, std::abs(o.grad_params[i] - ns.grad_params[i]));
    }
  }
  return worst;
}

bool metrics_agree(Rng& rng, int instances) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < instances; ++t) {
    std::uniform_int_distribution<std::size_t> size(10, 200), cls(2, 12), dim(1, 8);
    const std::size_t n = size(rng), c = cls(rng), d = dim(rng);
    Matrix m(n, d);
    for (double& v : m.flat()) v = std::round(g(rng) * 4) / 4;  // ties on purpose
    std::vector<int> labels(n);
    std::uniform_int_distribution<int> lab(0, static_cast<int>(c) - 1);
    for (int& l : labels) l = lab(rng);
    const EmbeddingSet e(std::move(m));
    const LabelSet ls(labels);
    for (Metric metric : {Metric::euclidean, Metric::cosine}) {
      if (metric == Metric::cosine) {
        bool zero = false;
        for (std::size_t i = 0; i < n && !zero; ++i) zero = squared_norm(e.row(i)) == 0.0;
        if (zero) continue;
      }
      if (!(evaluate_retrieval(e, ls, metric) == evaluate_retrieval_serial(e, ls, metric))) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<CheckLine> self_check(std::uint64_t seed) {
  std::vector<CheckLine> out;
  Rng rng = make_rng(seed, 0xc4ec);
  for (LossKind k : all_losses()) {
    const double tol = k == LossKind::fastap ? 1e-3 : 1e-4;
    const double err = loss_gradient_error(k, rng, 20);
    out.push_back({"gradient " + std::string(to_string(k)), err < tol,
                   "max relative error " + sci(err) + " (tolerance " + sci(tol) + ")"});
  }
  for (LossKind k : all_losses()) {
    const double tol = k == LossKind::fastap ? 1e-3 : 1e-4;
    const double err = mlp_gradient_error(k, rng);
    out.push_back({"mlp backward + " + std::string(to_string(k)), err < tol,
                   "max relative error " + sci(err) + " (tolerance " + sci(tol) + ")"});
  }
  const double gap = reduction_gap(rng, 50);
  out.push_back({"cosface(m=0) = arcface(m=0) = normalized_softmax", gap <= 1e-6, "max gap " + sci(gap)});
  out.push_back({"serial and parallel metrics agree", metrics_agree(rng, 20), "20 random instances"});
  return out;
}

}  // namespace dml
