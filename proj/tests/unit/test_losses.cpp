#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "batches.hpp"
#include "dml/error.hpp"
#include "dml/losses.hpp"

using namespace dml;
namespace dt = dml::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected dml::Error";
  return ErrorKind::IoError;
}

// Unit vectors in the plane at the given angles.
Batch planar(std::initializer_list<double> angles, std::vector<int> labels) {
  Batch b;
  b.embeddings = Matrix(angles.size(), 2);
  std::size_t i = 0;
  for (double a : angles) {
    b.embeddings(i, 0) = std::cos(a);
    b.embeddings(i, 1) = std::sin(a);
    ++i;
  }
  b.labels = std::move(labels);
  return b;
}

// angle whose chord from angle 0 has the given length
double chord_angle(double d) { return 2.0 * std::asin(d / 2.0); }

LossState state_for(LossKind k, const LossParams& p, std::size_t classes, std::size_t dim, std::uint64_t seed = 1) {
  return init_loss_state(k, p, classes, dim, seed);
}

bool all_finite(const LossOutput& o) {
  if (!std::isfinite(o.value)) return false;
  for (double v : o.grad_embeddings.flat())
    if (!std::isfinite(v)) return false;
  for (double v : o.grad_params)
    if (!std::isfinite(v)) return false;
  return true;
}

// Params that keep hinge losses partially active on clustered batches.
LossParams suite_params(LossKind k) {
  LossParams p = default_params(k);
  if (k == LossKind::margin || k == LossKind::margin_per_class) p.beta_init = 0.9;
  return p;
}

// Finite-difference check with resampling when a batch lands near a kink.
double checked_error(LossKind k, std::mt19937_64& rng, double step) {
  const LossParams p = suite_params(k);
  for (int attempt = 0; attempt < 50; ++attempt) {
    const Batch b = dt::clustered_batch(rng, 4, 3, 6, 0.6);
    LossState s = state_for(k, p, 4, 6, rng());
    if (k == LossKind::margin_per_class)
      for (std::size_t c = 0; c < s.num_betas; ++c) s.params[c] = 0.8 + 0.1 * static_cast<double>(c);
    try {
      return gradient_check(k, b, p, s, step, 1.0).max_relative_error;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::KinkProximity) throw;
    }
  }
  ADD_FAILURE() << "no kink-free batch found for " << to_string(k);
  return 1.0;
}

}  // namespace

TEST(LossRegistry, IdsRoundTrip) {
  EXPECT_EQ(all_losses().size(), 13u);
  for (LossKind k : all_losses()) EXPECT_EQ(parse_loss(to_string(k)), k);
  EXPECT_EQ(kind_of([] { parse_loss("lifted_structure"); }), ErrorKind::UnknownKind);
  EXPECT_TRUE(is_classification(LossKind::arcface));
  EXPECT_FALSE(accepts_miner(LossKind::fastap));
  EXPECT_TRUE(accepts_miner(LossKind::multisimilarity));
}

TEST(LossParams, NamedAccessAndValidation) {
  LossParams p;
  set_param(p, "margin", 0.3);
  set_param(p, "num_bins", 20);
  EXPECT_EQ(p.margin, 0.3);
  EXPECT_EQ(p.num_bins, 20u);
  EXPECT_EQ(get_param(p, "num_bins"), 20.0);
  for (auto name : param_names()) EXPECT_NO_THROW((void)get_param(p, name));
  EXPECT_EQ(kind_of([&] { set_param(p, "optimzer", 1.0); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { set_param(p, "num_bins", 2.5); }), ErrorKind::InvalidArgument);
  p.temperature = 0.0;
  EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::InvalidArgument);
  for (LossKind k : all_losses()) EXPECT_NO_THROW(default_params(k).validate());
  EXPECT_NEAR(default_params(LossKind::triplet).margin, 0.1, 1e-15);
}

TEST(Contrastive, HandExample) {
  LossParams p;
  p.pos_margin = 0.0;
  p.neg_margin = 0.5;
  const Batch b = planar({0.0, chord_angle(0.3), -chord_angle(0.2)}, {0, 0, 1});
  const MinedTuples mined = MinedPairs{{{0, 1}}, {{0, 2}}};
  const auto out = contrastive_loss(b, p, &mined);
  EXPECT_NEAR(out.value, 0.6, 1e-12);
  EXPECT_EQ(out.n_active, 2u);
}

TEST(Contrastive, SatisfiedMarginsGiveZero) {
  LossParams p;
  p.pos_margin = 0.5;
  p.neg_margin = 1.0;
  const Batch b = planar({0.0, 0.1, 3.0, 3.1}, {0, 0, 1, 1});
  const auto out = contrastive_loss(b, p);
  EXPECT_EQ(out.value, 0.0);
  for (double g : out.grad_embeddings.flat()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(gradient_check(LossKind::contrastive, b, p, {}, 1e-6, 1e-4).max_relative_error, 0.0);
}

TEST(Contrastive, NoPairsAndGradient) {
  Batch one;
  one.embeddings = Matrix(1, 2);
  one.embeddings(0, 0) = 1.0;
  one.labels = {0};
  EXPECT_EQ(kind_of([&] { contrastive_loss(one, {}); }), ErrorKind::BadDim);
  const Batch b = planar({0.0, 1.0}, {0, 0});
  const MinedTuples empty = MinedPairs{};
  EXPECT_EQ(kind_of([&] { contrastive_loss(b, {}, &empty); }), ErrorKind::NoPairs);

  std::mt19937_64 rng(1);
  EXPECT_LT(checked_error(LossKind::contrastive, rng, 1e-6), 1e-4);
}

TEST(Triplet, HandExample) {
  LossParams p;
  p.margin = 0.1;
  const Batch b = planar({0.0, chord_angle(0.6), -chord_angle(0.5)}, {0, 0, 1});
  const MinedTuples mined = MinedTriplets{{{0, 1, 2}}};
  EXPECT_NEAR(triplet_margin_loss(b, p, &mined).value, 0.2, 1e-12);
  // d_an >= d_ap + m everywhere
  const Batch easy = planar({0.0, 0.05, 3.0}, {0, 0, 1});
  EXPECT_EQ(triplet_margin_loss(easy, p).value, 0.0);
  const Batch no_neg = planar({0.0, 0.05}, {0, 0});
  EXPECT_EQ(kind_of([&] { triplet_margin_loss(no_neg, p); }), ErrorKind::NoTriplets);
}

TEST(Triplet, MinedPairsBecomeTriplets) {
  const Batch b = planar({0.0, 0.3, 0.5, 2.0}, {0, 0, 1, 1});
  const MinedTuples pairs = MinedPairs{{{0, 1}}, {{0, 2}, {0, 3}}};
  const MinedTuples triplets = MinedTriplets{{{0, 1, 2}, {0, 1, 3}}};
  LossParams p;
  p.margin = 1.0;
  EXPECT_EQ(triplet_margin_loss(b, p, &pairs).value, triplet_margin_loss(b, p, &triplets).value);
  const MinedTuples bad = MinedPairs{{{0, 2}}, {}};
  EXPECT_EQ(kind_of([&] { contrastive_loss(b, p, &bad); }), ErrorKind::InvalidArgument);
}

TEST(NtXent, EqualSimilaritiesGiveLogTwo) {
  LossParams p;
  p.temperature = 1.0;
  // anchor at 0, positive and negative symmetric around it
  const Batch b = planar({0.0, 0.4, -0.4}, {0, 0, 1});
  const MinedTuples mined = MinedPairs{{{0, 1}}, {{0, 2}}};
  const auto out = pair_weighting_loss(LossKind::ntxent, b, p, {}, &mined);
  EXPECT_NEAR(out.value, std::log(2.0), 1e-12);
  // without mining every positive pair sees every negative; all three identical
  const Batch same = planar({0.7, 0.7, 0.7}, {0, 0, 1});
  EXPECT_NEAR(pair_weighting_loss(LossKind::ntxent, same, p, {}).value, std::log(2.0), 1e-12);
}

TEST(MarginLoss, SatisfiedMarginsGiveZeroBetaGradient) {
  LossParams p;
  p.alpha = 0.2;
  p.beta_init = 1.0;
  const Batch b = planar({0.0, 0.1, 3.0, 3.1}, {0, 0, 1, 1});
  for (LossKind k : {LossKind::margin, LossKind::margin_per_class}) {
    const LossState s = state_for(k, p, 2, 2);
    const auto out = pair_weighting_loss(k, b, p, s);
    EXPECT_EQ(out.value, 0.0);
    for (double g : out.grad_params) EXPECT_EQ(g, 0.0);
  }
}

TEST(MarginLoss, BetaGradientSign) {
  LossParams p;
  p.alpha = 0.1;
  p.beta_init = 0.2;
  // positives far apart: raising beta lowers the positive hinge
  const Batch b = planar({0.0, 1.5, 3.0, 4.5}, {0, 0, 1, 1});
  const LossState s = state_for(LossKind::margin, p, 2, 2);
  const auto out = pair_weighting_loss(LossKind::margin, b, p, s);
  ASSERT_EQ(out.grad_params.size(), 1u);
  EXPECT_NEAR(out.grad_params[0], -1.0, 1e-12);
  const LossState per = state_for(LossKind::margin_per_class, p, 2, 2);
  const auto split = pair_weighting_loss(LossKind::margin_per_class, b, p, per);
  EXPECT_NEAR(split.grad_params[0] + split.grad_params[1], -1.0, 1e-12);
  Batch unknown = b;
  unknown.labels = {0, 0, 5, 5};
  EXPECT_EQ(kind_of([&] { pair_weighting_loss(LossKind::margin_per_class, unknown, p, per); }),
            ErrorKind::UnknownClass);
}

TEST(MultiSimilarity, MatchesDirectFormula) {
  std::mt19937_64 rng(3);
  const Batch b = dt::clustered_batch(rng, 3, 3, 5, 0.5);
  const LossParams p = default_params(LossKind::multisimilarity);
  const auto& x = b.embeddings;
  double expected = 0.0;
  for (std::size_t a = 0; a < 9; ++a) {
    double sp = 0.0;
    double sn = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      if (j == a) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += x(a, k) * x(j, k);
      if (b.labels[j] == b.labels[a])
        sp += std::exp(-p.ms_alpha * (s - p.ms_base));
      else
        sn += std::exp(p.ms_beta * (s - p.ms_base));
    }
    expected += std::log1p(sp) / p.ms_alpha + std::log1p(sn) / p.ms_beta;
  }
  expected /= 9.0;
  EXPECT_NEAR(pair_weighting_loss(LossKind::multisimilarity, b, p, {}).value, expected, 1e-12);
  EXPECT_LT(checked_error(LossKind::multisimilarity, rng, 1e-6), 1e-4);
}

TEST(Snr, MatchesDirectFormula) {
  std::mt19937_64 rng(4);
  const Batch b = dt::clustered_batch(rng, 2, 2, 4, 0.4);
  LossParams p = default_params(LossKind::snr);
  p.pos_margin = 0.2;
  p.neg_margin = 2.0;
  p.reg_weight = 0.5;
  const auto& x = b.embeddings;
  auto var = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double e : v) s += (e - m) * (e - m);
    return s / static_cast<double>(v.size());
  };
  double pos = 0.0, neg = 0.0;
  int np = 0, nn = 0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t j = 0; j < 4; ++j) {
      if (a == j) continue;
      std::vector<double> diff, anchor;
      for (std::size_t k = 0; k < 4; ++k) {
        diff.push_back(x(j, k) - x(a, k));
        anchor.push_back(x(a, k));
      }
      const double rho = var(diff) / var(anchor);
      if (b.labels[a] == b.labels[j]) {
        pos += std::max(0.0, rho - p.pos_margin);
        ++np;
      } else {
        neg += std::max(0.0, p.neg_margin - rho);
        ++nn;
      }
    }
  double reg = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double m = 0.0;
    for (std::size_t k = 0; k < 4; ++k) m += x(i, k) / 4.0;
    reg += m * m / 4.0;
  }
  const double expected = pos / np + neg / nn + p.reg_weight * reg;
  EXPECT_NEAR(pair_weighting_loss(LossKind::snr, b, p, {}).value, expected, 1e-12);
}

TEST(Classification, MarginFreeReductions) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Batch b = dt::random_batch(rng, 5, 2, 7);
    LossParams p;
    p.scale = 10.0;
    p.class_margin = 0.0;
    const LossState s = state_for(LossKind::normalized_softmax, p, 5, 7, rng());
    const auto ns = classification_loss(LossKind::normalized_softmax, b, s, p);
    for (LossKind k : {LossKind::cosface, LossKind::arcface}) {
      const auto o = classification_loss(k, b, s, p);
      EXPECT_NEAR(o.value, ns.value, 1e-6);
      for (std::size_t i = 0; i < o.grad_params.size(); ++i) EXPECT_NEAR(o.grad_params[i], ns.grad_params[i], 1e-6);
      for (std::size_t i = 0; i < o.grad_embeddings.size(); ++i)
        EXPECT_NEAR(o.grad_embeddings.flat()[i], ns.grad_embeddings.flat()[i], 1e-6);
    }
  }
}

TEST(Classification, SingleClassIsZero) {
  std::mt19937_64 rng(6);
  Batch b = dt::random_batch(rng, 1, 3, 4);
  for (LossKind k : {LossKind::normalized_softmax, LossKind::cosface, LossKind::arcface, LossKind::proxynca,
                     LossKind::softtriple}) {
    const LossParams p = default_params(k);
    const LossState s = state_for(k, p, 1, 4);
    EXPECT_NEAR(classification_loss(k, b, s, p).value, 0.0, 1e-15) << to_string(k);
  }
  const LossState s = state_for(LossKind::arcface, {}, 1, 4);
  b.labels[0] = 1;
  EXPECT_EQ(kind_of([&] { classification_loss(LossKind::arcface, b, s, {}); }), ErrorKind::UnknownClass);
  EXPECT_EQ(kind_of([&] { classification_loss(LossKind::triplet, b, s, {}); }), ErrorKind::UnknownKind);
}

TEST(Classification, ProxyNcaMatchesSquaredDistanceSoftmax) {
  std::mt19937_64 rng(7);
  const Batch b = dt::random_batch(rng, 3, 2, 5);
  LossParams p = default_params(LossKind::proxynca);
  p.scale = 1.0;
  const LossState s = state_for(LossKind::proxynca, p, 3, 5);
  double expected = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> z;
    for (std::size_t c = 0; c < 3; ++c) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 5; ++k) {
        const double diff = b.embeddings(i, k) - s.column(c, 0)[k];
        d2 += diff * diff;
      }
      z.push_back(-d2);
    }
    double denom = 0.0;
    for (double v : z) denom += std::exp(v);
    expected += -(z[static_cast<std::size_t>(b.labels[i])] - std::log(denom)) / 6.0;
  }
  EXPECT_NEAR(classification_loss(LossKind::proxynca, b, s, p).value, expected, 1e-12);
}

TEST(Classification, SoftTripleSingleCenterHardLimit) {
  std::mt19937_64 rng(8);
  const Batch b = dt::random_batch(rng, 4, 2, 6);
  LossParams p;
  p.scale = 20.0;
  p.centers = 1;
  p.gamma = 1e-3;
  p.delta = 0.0;
  const LossState s = state_for(LossKind::normalized_softmax, p, 4, 6);
  LossState st = s;
  st.centers = 1;
  const double a = classification_loss(LossKind::normalized_softmax, b, s, p).value;
  const double c = classification_loss(LossKind::softtriple, b, st, p).value;
  EXPECT_NEAR(a, c, 1e-3);
}

TEST(Classification, ArcfaceGradientIncludingWeights) {
  std::mt19937_64 rng(9);
  EXPECT_LT(checked_error(LossKind::arcface, rng, 1e-6), 1e-4);
}

TEST(Classification, LargeScaleStaysFinite) {
  std::mt19937_64 rng(10);
  const Batch b = dt::random_batch(rng, 6, 2, 5);
  for (LossKind k : all_losses()) {
    if (!is_classification(k)) continue;
    LossParams p = default_params(k);
    p.scale = 128.0;
    const LossState s = state_for(k, p, 6, 5);
    const auto o = classification_loss(k, b, s, p);
    EXPECT_TRUE(all_finite(o)) << to_string(k);
  }
  LossParams p = default_params(LossKind::ntxent);
  p.temperature = 1.0 / 128.0;
  EXPECT_TRUE(all_finite(pair_weighting_loss(LossKind::ntxent, b, p, {})));
}

namespace {

// Soft-histogram AP written directly from its definition.
double fastap_oracle(const Batch& b, std::size_t bins) {
  const double delta = 4.0 / static_cast<double>(bins - 1);
  const std::size_t n = b.labels.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> hp(bins, 0.0), hn(bins, 0.0);
    double npos = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < b.embeddings.cols(); ++k) {
        const double diff = b.embeddings(i, k) - b.embeddings(j, k);
        d2 += diff * diff;
      }
      const bool pos = b.labels[i] == b.labels[j];
      npos += pos;
      for (std::size_t l = 0; l < bins; ++l) {
        const double w = std::max(0.0, 1.0 - std::abs(d2 - static_cast<double>(l) * delta) / delta);
        (pos ? hp : hn)[l] += w;
      }
    }
    double ap = 0.0;
    for (std::size_t l = 0; l < bins; ++l) {
      double cp = 0.0, c = 0.0;
      for (std::size_t m = 0; m <= l; ++m) {
        cp += hp[m];
        c += hp[m] + hn[m];
      }
      if (c > 0.0) ap += hp[l] * cp / c;
    }
    total += 1.0 - ap / npos;
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST(FastAp, SeparatedBatchNearZero) {
  // two tight clusters on opposite sides of the circle
  const Batch b = planar({0.0, 0.01, 0.02, 3.14, 3.15, 3.16}, {0, 0, 0, 1, 1, 1});
  const auto out = fastap_loss(b, default_params(LossKind::fastap));
  EXPECT_LT(out.value, 0.05);
}

TEST(FastAp, CoincidentPointsGivePositiveFraction) {
  const Batch b = planar({0.5, 0.5, 0.5, 0.5, 0.5}, {0, 0, 0, 1, 1});
  LossParams p;
  p.num_bins = 10;
  const double v = fastap_loss(b, p).value;
  // class-0 anchors: 2 of 4 others positive; class-1 anchors: 1 of 4
  const double expected = 1.0 - (3 * (2.0 / 4.0) + 2 * (1.0 / 4.0)) / 5.0;
  EXPECT_NEAR(v, expected, 1e-12);
  EXPECT_NEAR(v, fastap_oracle(b, 10), 1e-12);
}

TEST(FastAp, MatchesHistogramOracleAndGradient) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 5; ++t) {
    const Batch b = dt::clustered_batch(rng, 3, 3, 5, 0.7);
    for (std::size_t bins : {2u, 5u, 10u, 25u}) {
      LossParams p;
      p.num_bins = bins;
      EXPECT_NEAR(fastap_loss(b, p).value, fastap_oracle(b, bins), 1e-12);
    }
  }
  EXPECT_LT(checked_error(LossKind::fastap, rng, 1e-6), 1e-3);
  const Batch lonely = planar({0.0, 1.0, 2.0}, {0, 0, 1});
  EXPECT_EQ(kind_of([&] { fastap_loss(lonely, {}); }), ErrorKind::NoPositives);
}

TEST(GradientCheck, Preconditions) {
  std::mt19937_64 rng(12);
  const Batch b = dt::clustered_batch(rng, 2, 2, 3, 0.3);
  EXPECT_EQ(kind_of([&] { gradient_check(LossKind::contrastive, b, {}, {}, 0.0, 1e-4); }),
            ErrorKind::InvalidArgument);
  // positive pair exactly at the positive margin
  LossParams p;
  p.pos_margin = 0.3;
  const Batch kink = planar({0.0, chord_angle(0.3), 2.0}, {0, 0, 1});
  EXPECT_EQ(kind_of([&] { gradient_check(LossKind::contrastive, kink, p, {}, 1e-6, 1e-4); }),
            ErrorKind::KinkProximity);
}

TEST(LossProperties, EveryLossPassesGradientCheck) {
  std::mt19937_64 rng(2024);
  for (LossKind k : all_losses()) {
    const double tol = k == LossKind::fastap ? 1e-3 : 1e-4;
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) worst = std::max(worst, checked_error(k, rng, 1e-6));
    EXPECT_LT(worst, tol) << to_string(k);
  }
}

TEST(LossProperties, NonNegativeFiniteAndPermutationInvariant) {
  std::mt19937_64 rng(2025);
  for (LossKind k : all_losses()) {
    const LossParams p = suite_params(k);
    for (int t = 0; t < 5; ++t) {
      const Batch b = dt::clustered_batch(rng, 4, 3, 6, 0.8);
      const LossState s = state_for(k, p, 4, 6, rng());
      const auto out = compute_loss(k, b, p, s);
      EXPECT_GE(out.value, 0.0) << to_string(k);
      EXPECT_TRUE(all_finite(out)) << to_string(k);

      std::vector<std::size_t> perm(b.labels.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Batch shuffled;
      shuffled.embeddings = gather_rows(b.embeddings, perm);
      for (std::size_t i : perm) shuffled.labels.push_back(b.labels[i]);
      EXPECT_NEAR(compute_loss(k, shuffled, p, s).value, out.value, 1e-12) << to_string(k);
    }
  }
}

TEST(LossState, LayoutAndRenormalization) {
  LossParams p = default_params(LossKind::softtriple);
  p.centers = 3;
  LossState s = init_loss_state(LossKind::softtriple, p, 4, 5, 9);
  EXPECT_EQ(s.params.size(), 4u * 3u * 5u);
  for (double& v : s.params) v *= 3.0;
  renormalize_columns(s);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(squared_norm(s.column(c, k)), 1.0, 1e-12);
  const LossState m = init_loss_state(LossKind::margin_per_class, default_params(LossKind::margin), 6, 5, 9);
  EXPECT_EQ(m.num_betas, 6u);
  EXPECT_EQ(m.params, std::vector<double>(6, 1.2));
  EXPECT_EQ(init_loss_state(LossKind::arcface, p, 4, 5, 9), init_loss_state(LossKind::arcface, p, 4, 5, 9));
}
