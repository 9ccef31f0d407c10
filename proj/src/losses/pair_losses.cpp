#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "detail.hpp"
#include "dml/error.hpp"

namespace dml {

namespace detail {

void check_batch(const Batch& b) {
  require(b.embeddings.rows() >= 2, ErrorKind::BadDim, "a batch needs at least 2 rows");
  require(b.embeddings.cols() >= 1, ErrorKind::BadDim, "a batch needs at least 1 column");
  require(b.labels.size() == b.embeddings.rows(), ErrorKind::LengthMismatch, "one label per batch row expected");
  for (double v : b.embeddings.flat())
    require(std::isfinite(v), ErrorKind::InvalidArgument, "batch contains a non-finite value");
}

namespace {

void check_pair(const Batch& b, std::size_t a, std::size_t j, bool same) {
  const std::size_t n = b.labels.size();
  require(a < n && j < n && a != j, ErrorKind::InvalidArgument, "mined index out of range or self pair");
  require((b.labels[a] == b.labels[j]) == same, ErrorKind::InvalidArgument, "mined tuple violates label constraint");
}

}  // namespace

PairSets pair_sets(const Batch& b, const MinedTuples* mined) {
  PairSets out;
  if (mined == nullptr) {
    const std::size_t n = b.labels.size();
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t j = 0; j < n; ++j) {
        if (a == j) continue;
        (b.labels[a] == b.labels[j] ? out.positives : out.negatives).emplace_back(a, j);
      }
    return out;
  }
  const MinedPairs pairs =
      std::holds_alternative<MinedPairs>(*mined) ? std::get<MinedPairs>(*mined) : to_pairs(std::get<MinedTriplets>(*mined));
  for (const auto& [a, j] : pairs.positives) check_pair(b, a, j, true);
  for (const auto& [a, j] : pairs.negatives) check_pair(b, a, j, false);
  out.positives = pairs.positives;
  out.negatives = pairs.negatives;
  return out;
}

std::vector<std::array<std::size_t, 3>> triplet_set(const Batch& b, const MinedTuples* mined) {
  if (mined == nullptr) {
    std::vector<std::array<std::size_t, 3>> out;
    const std::size_t n = b.labels.size();
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t p = 0; p < n; ++p) {
        if (p == a || b.labels[p] != b.labels[a]) continue;
        for (std::size_t q = 0; q < n; ++q)
          if (b.labels[q] != b.labels[a]) out.push_back({a, p, q});
      }
    return out;
  }
  MinedTriplets t = std::holds_alternative<MinedTriplets>(*mined) ? std::get<MinedTriplets>(*mined)
                                                                  : to_triplets(std::get<MinedPairs>(*mined));
  for (const auto& [a, p, q] : t.triplets) {
    check_pair(b, a, p, true);
    check_pair(b, a, q, false);
  }
  return t.triplets;
}

double log_sum_exp(std::span<const double> z) {
  if (z.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void add_distance_grad(const Matrix& x, std::size_t a, std::size_t j, double d, double c, Matrix& g) {
  if (d <= 0.0 || c == 0.0) return;
  const auto xa = x.row(a);
  const auto xj = x.row(j);
  auto ga = g.row(a);
  auto gj = g.row(j);
  for (std::size_t k = 0; k < xa.size(); ++k) {
    const double v = c * (xa[k] - xj[k]) / d;
    ga[k] += v;
    gj[k] -= v;
  }
}

}  // namespace detail

namespace {

using detail::IndexPair;

double variance(std::span<const double> v, double& mean) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

// Pairwise "distance" used inside the hinge terms, with its gradient.
struct PairMeasure {
  std::function<double(std::size_t, std::size_t)> value;
  // add c * d(value)/d(x) to g
  std::function<void(std::size_t, std::size_t, double, double, Matrix&)> add_grad;
  bool zero_is_kink;
};

PairMeasure euclidean_measure(const Matrix& x) {
  return {[&x](std::size_t a, std::size_t j) { return detail::row_distance(x.row(a), x.row(j)); },
          [&x](std::size_t a, std::size_t j, double d, double c, Matrix& g) { detail::add_distance_grad(x, a, j, d, c, g); },
          true};
}

// var(x_j - x_a) / var(x_a)
PairMeasure snr_measure(const Matrix& x) {
  auto value = [&x](std::size_t a, std::size_t j) {
    const std::size_t d = x.cols();
    std::vector<double> u(d);
    for (std::size_t k = 0; k < d; ++k) u[k] = x(j, k) - x(a, k);
    double mu = 0.0;
    double ma = 0.0;
    const double va = variance(x.row(a), ma);
    require(va > 0.0, ErrorKind::InvalidArgument, "snr needs embeddings with non-zero component variance");
    return variance(u, mu) / va;
  };
  auto add_grad = [&x](std::size_t a, std::size_t j, double rho, double c, Matrix& g) {
    const std::size_t d = x.cols();
    std::vector<double> u(d);
    for (std::size_t k = 0; k < d; ++k) u[k] = x(j, k) - x(a, k);
    double mu = 0.0;
    double ma = 0.0;
    (void)variance(u, mu);
    const double va = variance(x.row(a), ma);
    const double dd = static_cast<double>(d);
    for (std::size_t k = 0; k < d; ++k) {
      const double dn = 2.0 * (u[k] - mu) / (dd * va);
      const double dva = 2.0 * (x(a, k) - ma) / dd;
      g(j, k) += c * dn;
      g(a, k) += c * (-dn - rho / va * dva);
    }
  };
  return {value, add_grad, false};
}

// Mean positive hinge + mean negative hinge. beta_slot maps an anchor to the
// learnable beta it uses, or -1 for fixed margins.
LossOutput hinge_pairs(const Batch& b, const detail::PairSets& ps, const PairMeasure& measure,
                       const std::function<double(std::size_t)>& m_pos, const std::function<double(std::size_t)>& m_neg,
                       const std::function<long(std::size_t)>& beta_slot, std::size_t num_params) {
  require(!ps.positives.empty() || !ps.negatives.empty(), ErrorKind::NoPairs, "batch has no pairs");
  LossOutput out;
  out.grad_embeddings = Matrix(b.embeddings.rows(), b.embeddings.cols());
  out.grad_params.assign(num_params, 0.0);

  auto run = [&](const std::vector<IndexPair>& pairs, bool positive) {
    if (pairs.empty()) return;
    const double w = 1.0 / static_cast<double>(pairs.size());
    for (const auto& [a, j] : pairs) {
      const double d = measure.value(a, j);
      const double m = positive ? m_pos(a) : m_neg(a);
      const double t = positive ? d - m : m - d;
      out.kink_slack = std::min(out.kink_slack, std::abs(t));
      if (measure.zero_is_kink) out.kink_slack = std::min(out.kink_slack, d);
      if (t <= 0.0) continue;
      ++out.n_active;
      out.value += w * t;
      measure.add_grad(a, j, d, positive ? w : -w, out.grad_embeddings);
      const long slot = beta_slot(a);
      if (slot >= 0) out.grad_params[static_cast<std::size_t>(slot)] += positive ? -w : w;
    }
  };
  run(ps.positives, true);
  run(ps.negatives, false);
  return out;
}

std::size_t beta_index(const Batch& b, const LossState& s, std::size_t a) {
  const int label = b.labels[a];
  require(label >= 0 && static_cast<std::size_t>(label) < s.num_betas, ErrorKind::UnknownClass,
          "no beta for class " + std::to_string(label));
  return static_cast<std::size_t>(label);
}

LossOutput ntxent(const Batch& b, const LossParams& p, const detail::PairSets& ps) {
  require(!ps.positives.empty(), ErrorKind::NoPairs, "ntxent needs at least one positive pair");
  const Matrix& x = b.embeddings;
  const std::size_t n = x.rows();
  std::vector<std::vector<std::size_t>> negs(n);
  for (const auto& [a, j] : ps.negatives) negs[a].push_back(j);

  LossOutput out;
  out.grad_embeddings = Matrix(n, x.cols());
  const double w = 1.0 / static_cast<double>(ps.positives.size());
  const double inv_t = 1.0 / p.temperature;
  std::vector<double> z;
  std::vector<std::size_t> idx;
  for (const auto& [i, j] : ps.positives) {
    z.clear();
    idx.clear();
    idx.push_back(j);
    for (std::size_t k : negs[i]) idx.push_back(k);
    for (std::size_t k : idx) z.push_back(dot(x.row(i), x.row(k)) * inv_t);
    const double lse = detail::log_sum_exp(z);
    const double term = lse - z[0];
    if (term > 0.0) ++out.n_active;
    out.value += w * term;
    for (std::size_t t = 0; t < idx.size(); ++t) {
      const double pk = std::exp(z[t] - lse);
      const double coef = w * inv_t * (t == 0 ? pk - 1.0 : pk);  // d loss / d s_ik
      const std::size_t k = idx[t];
      for (std::size_t c = 0; c < x.cols(); ++c) {
        out.grad_embeddings(i, c) += coef * x(k, c);
        out.grad_embeddings(k, c) += coef * x(i, c);
      }
    }
  }
  out.value = std::max(out.value, 0.0);
  return out;
}

LossOutput multisimilarity(const Batch& b, const LossParams& p, const detail::PairSets& ps) {
  require(!ps.positives.empty() || !ps.negatives.empty(), ErrorKind::NoPairs, "batch has no pairs");
  const Matrix& x = b.embeddings;
  const std::size_t n = x.rows();
  std::vector<std::vector<std::size_t>> pos(n);
  std::vector<std::vector<std::size_t>> neg(n);
  for (const auto& [a, j] : ps.positives) pos[a].push_back(j);
  for (const auto& [a, j] : ps.negatives) neg[a].push_back(j);

  LossOutput out;
  out.grad_embeddings = Matrix(n, x.cols());
  const double inv_b = 1.0 / static_cast<double>(n);
  std::vector<double> z;
  // (1/scale) * log(1 + sum exp(sign * scale * (s - base))), gradient sign * w_k per pair
  auto side = [&](std::size_t a, const std::vector<std::size_t>& others, double scale, double sign) {
    if (others.empty()) return;
    z.assign(1, 0.0);
    for (std::size_t j : others) z.push_back(sign * scale * (dot(x.row(a), x.row(j)) - p.ms_base));
    const double lse = detail::log_sum_exp(z);
    out.value += inv_b * lse / scale;
    if (lse > 0.0) ++out.n_active;
    for (std::size_t t = 0; t < others.size(); ++t) {
      const double coef = inv_b * sign * std::exp(z[t + 1] - lse);
      const std::size_t j = others[t];
      for (std::size_t c = 0; c < x.cols(); ++c) {
        out.grad_embeddings(a, c) += coef * x(j, c);
        out.grad_embeddings(j, c) += coef * x(a, c);
      }
    }
  };
  for (std::size_t a = 0; a < n; ++a) {
    side(a, pos[a], p.ms_alpha, -1.0);
    side(a, neg[a], p.ms_beta, 1.0);
  }
  return out;
}

}  // namespace

LossOutput contrastive_loss(const Batch& b, const LossParams& p, const MinedTuples* mined) {
  detail::check_batch(b);
  const auto ps = detail::pair_sets(b, mined);
  return hinge_pairs(
      b, ps, euclidean_measure(b.embeddings), [&](std::size_t) { return p.pos_margin; },
      [&](std::size_t) { return p.neg_margin; }, [](std::size_t) { return -1L; }, 0);
}

LossOutput triplet_margin_loss(const Batch& b, const LossParams& p, const MinedTuples* mined) {
  detail::check_batch(b);
  const auto triplets = detail::triplet_set(b, mined);
  require(!triplets.empty(), ErrorKind::NoTriplets, "batch has no valid triplets");
  const Matrix& x = b.embeddings;
  LossOutput out;
  out.grad_embeddings = Matrix(x.rows(), x.cols());
  const double w = 1.0 / static_cast<double>(triplets.size());
  for (const auto& [a, pi, ni] : triplets) {
    const double dap = detail::row_distance(x.row(a), x.row(pi));
    const double dan = detail::row_distance(x.row(a), x.row(ni));
    const double t = dap - dan + p.margin;
    out.kink_slack = std::min({out.kink_slack, std::abs(t), dap, dan});
    if (t <= 0.0) continue;
    ++out.n_active;
    out.value += w * t;
    detail::add_distance_grad(x, a, pi, dap, w, out.grad_embeddings);
    detail::add_distance_grad(x, a, ni, dan, -w, out.grad_embeddings);
  }
  return out;
}

LossOutput pair_weighting_loss(LossKind k, const Batch& b, const LossParams& p, const LossState& s,
                               const MinedTuples* mined) {
  detail::check_batch(b);
  const auto ps = detail::pair_sets(b, mined);
  switch (k) {
    case LossKind::ntxent:
      return ntxent(b, p, ps);
    case LossKind::multisimilarity:
      return multisimilarity(b, p, ps);
    case LossKind::margin:
    case LossKind::margin_per_class: {
      const bool per_class = k == LossKind::margin_per_class;
      require(s.num_betas == (per_class ? s.num_classes : 1) && s.num_betas >= 1, ErrorKind::InvalidArgument,
              "loss state does not match margin loss kind");
      auto slot = [&](std::size_t a) { return per_class ? static_cast<long>(beta_index(b, s, a)) : 0L; };
      auto beta = [&](std::size_t a) { return s.params[static_cast<std::size_t>(slot(a))]; };
      // margins may go negative if beta drifts below alpha; the hinge still applies
      return hinge_pairs(
          b, ps, euclidean_measure(b.embeddings), [&](std::size_t a) { return beta(a) - p.alpha; },
          [&](std::size_t a) { return beta(a) + p.alpha; }, slot, s.params.size());
    }
    case LossKind::snr: {
      LossOutput out = hinge_pairs(
          b, ps, snr_measure(b.embeddings), [&](std::size_t) { return p.pos_margin; },
          [&](std::size_t) { return p.neg_margin; }, [](std::size_t) { return -1L; }, 0);
      if (p.reg_weight > 0.0) {
        const Matrix& x = b.embeddings;
        const double dd = static_cast<double>(x.cols());
        const double inv_b = 1.0 / static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          double mu = 0.0;
          for (double v : x.row(i)) mu += v;
          mu /= dd;
          out.value += p.reg_weight * inv_b * mu * mu;
          for (std::size_t c = 0; c < x.cols(); ++c) out.grad_embeddings(i, c) += p.reg_weight * inv_b * 2.0 * mu / dd;
        }
      }
      return out;
    }
    default:
      fail(ErrorKind::UnknownKind, "'" + std::string(to_string(k)) + "' is not a pair-weighting loss");
  }
}

LossOutput compute_loss(LossKind k, const Batch& b, const LossParams& p, const LossState& s,
                        const MinedTuples* mined) {
  require(mined == nullptr || accepts_miner(k), ErrorKind::InvalidArgument,
          "loss '" + std::string(to_string(k)) + "' does not accept mined tuples");
  switch (k) {
    case LossKind::contrastive:
      return contrastive_loss(b, p, mined);
    case LossKind::triplet:
      return triplet_margin_loss(b, p, mined);
    case LossKind::fastap:
      return fastap_loss(b, p);
    case LossKind::ntxent:
    case LossKind::multisimilarity:
    case LossKind::margin:
    case LossKind::margin_per_class:
    case LossKind::snr:
      return pair_weighting_loss(k, b, p, s, mined);
    default:
      return classification_loss(k, b, s, p);
  }
}

}  // namespace dml
