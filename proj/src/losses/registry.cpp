#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>

#include "dml/error.hpp"
#include "dml/losses.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

constexpr std::array<std::pair<LossKind, std::string_view>, 13> kNames{{
    {LossKind::contrastive, "contrastive"},
    {LossKind::triplet, "triplet"},
    {LossKind::ntxent, "ntxent"},
    {LossKind::proxynca, "proxynca"},
    {LossKind::margin, "margin"},
    {LossKind::margin_per_class, "margin_per_class"},
    {LossKind::normalized_softmax, "normalized_softmax"},
    {LossKind::cosface, "cosface"},
    {LossKind::arcface, "arcface"},
    {LossKind::fastap, "fastap"},
    {LossKind::snr, "snr"},
    {LossKind::multisimilarity, "multisimilarity"},
    {LossKind::softtriple, "softtriple"},
}};

constexpr std::array<LossKind, 13> kAll{
    LossKind::contrastive,  LossKind::triplet,    LossKind::ntxent,          LossKind::proxynca,
    LossKind::margin,       LossKind::margin_per_class, LossKind::normalized_softmax, LossKind::cosface,
    LossKind::arcface,      LossKind::fastap,     LossKind::snr,             LossKind::multisimilarity,
    LossKind::softtriple,
};

constexpr std::array<std::string_view, 17> kParamNames{
    "pos_margin", "neg_margin", "margin", "alpha",  "beta_init", "temperature", "ms_alpha", "ms_beta", "ms_base",
    "reg_weight", "num_bins",   "scale",  "class_margin", "gamma", "delta",   "centers",  "param_lr",
};

double* field(LossParams& p, std::string_view name) {
  if (name == "pos_margin") return &p.pos_margin;
  if (name == "neg_margin") return &p.neg_margin;
  if (name == "margin") return &p.margin;
  if (name == "alpha") return &p.alpha;
  if (name == "beta_init") return &p.beta_init;
  if (name == "temperature") return &p.temperature;
  if (name == "ms_alpha") return &p.ms_alpha;
  if (name == "ms_beta") return &p.ms_beta;
  if (name == "ms_base") return &p.ms_base;
  if (name == "reg_weight") return &p.reg_weight;
  if (name == "scale") return &p.scale;
  if (name == "class_margin") return &p.class_margin;
  if (name == "gamma") return &p.gamma;
  if (name == "delta") return &p.delta;
  if (name == "param_lr") return &p.param_lr;
  return nullptr;
}

std::size_t to_count(std::string_view name, double value) {
  require(std::isfinite(value) && value >= 1.0 && value == std::floor(value), ErrorKind::InvalidArgument,
          std::string(name) + " must be a positive integer");
  return static_cast<std::size_t>(value);
}

}  // namespace

std::string_view to_string(LossKind k) {
  for (const auto& [kind, name] : kNames)
    if (kind == k) return name;
  return "?";
}

LossKind parse_loss(std::string_view id) {
  for (const auto& [kind, name] : kNames)
    if (name == id) return kind;
  fail(ErrorKind::UnknownKind, "unknown loss '" + std::string(id) + "'");
}

std::span<const LossKind> all_losses() { return kAll; }

bool is_classification(LossKind k) {
  switch (k) {
    case LossKind::proxynca:
    case LossKind::normalized_softmax:
    case LossKind::cosface:
    case LossKind::arcface:
    case LossKind::softtriple:
      return true;
    default:
      return false;
  }
}

bool accepts_miner(LossKind k) { return !is_classification(k) && k != LossKind::fastap; }

void LossParams::validate() const {
  auto positive = [](double v, const char* name) {
    require(std::isfinite(v) && v > 0.0, ErrorKind::InvalidArgument, std::string(name) + " must be > 0");
  };
  auto non_negative = [](double v, const char* name) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidArgument, std::string(name) + " must be >= 0");
  };
  non_negative(pos_margin, "pos_margin");
  non_negative(neg_margin, "neg_margin");
  non_negative(margin, "margin");
  non_negative(alpha, "alpha");
  require(std::isfinite(beta_init), ErrorKind::InvalidArgument, "beta_init must be finite");
  positive(temperature, "temperature");
  positive(ms_alpha, "ms_alpha");
  positive(ms_beta, "ms_beta");
  require(std::isfinite(ms_base), ErrorKind::InvalidArgument, "ms_base must be finite");
  non_negative(reg_weight, "reg_weight");
  require(num_bins >= 2, ErrorKind::InvalidArgument, "num_bins must be >= 2");
  positive(scale, "scale");
  non_negative(class_margin, "class_margin");
  require(class_margin < 3.14159, ErrorKind::InvalidArgument, "class_margin must be below pi");
  positive(gamma, "gamma");
  non_negative(delta, "delta");
  require(centers >= 1, ErrorKind::InvalidArgument, "centers must be >= 1");
  non_negative(param_lr, "param_lr");
}

LossParams default_params(LossKind k) {
  LossParams p;
  switch (k) {
    case LossKind::contrastive:
      p.pos_margin = 0.0;
      p.neg_margin = 0.8;
      break;
    case LossKind::snr:
      p.pos_margin = 0.0;
      p.neg_margin = 1.0;
      p.reg_weight = 0.1;
      break;
    case LossKind::proxynca:
      p.scale = 4.0;
      break;
    case LossKind::softtriple:
      p.scale = 20.0;
      p.centers = 2;
      break;
    default:
      break;
  }
  if (k != LossKind::softtriple) p.centers = 1;
  return p;
}

std::span<const std::string_view> param_names() { return kParamNames; }

void set_param(LossParams& p, std::string_view name, double value) {
  if (name == "num_bins") {
    p.num_bins = to_count(name, value);
    return;
  }
  if (name == "centers") {
    p.centers = to_count(name, value);
    return;
  }
  double* f = field(p, name);
  require(f != nullptr, ErrorKind::InvalidArgument, "unknown loss parameter '" + std::string(name) + "'");
  *f = value;
}

double get_param(const LossParams& p, std::string_view name) {
  if (name == "num_bins") return static_cast<double>(p.num_bins);
  if (name == "centers") return static_cast<double>(p.centers);
  double* f = field(const_cast<LossParams&>(p), name);
  require(f != nullptr, ErrorKind::InvalidArgument, "unknown loss parameter '" + std::string(name) + "'");
  return *f;
}

std::span<const double> LossState::column(std::size_t c, std::size_t k) const {
  return std::span<const double>(params).subspan(num_betas + (c * centers + k) * dim, dim);
}

std::span<double> LossState::column(std::size_t c, std::size_t k) {
  return std::span<double>(params).subspan(num_betas + (c * centers + k) * dim, dim);
}

LossState init_loss_state(LossKind k, const LossParams& p, std::size_t num_classes, std::size_t dim,
                          std::uint64_t seed) {
  require(num_classes >= 1 && dim >= 1, ErrorKind::BadDim, "loss state needs classes and dim >= 1");
  LossState s;
  s.num_classes = num_classes;
  s.dim = dim;
  if (k == LossKind::margin) s.num_betas = 1;
  if (k == LossKind::margin_per_class) s.num_betas = num_classes;
  s.params.assign(s.num_betas, p.beta_init);
  if (!is_classification(k)) return s;

  s.centers = k == LossKind::softtriple ? p.centers : 1;
  s.params.resize(s.num_betas + num_classes * s.centers * dim);
  Rng rng = make_rng(seed, 0x10c5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = s.num_betas; i < s.params.size(); ++i) s.params[i] = g(rng);
  renormalize_columns(s);
  return s;
}

void renormalize_columns(LossState& s) {
  for (std::size_t c = 0; c < s.num_classes; ++c)
    for (std::size_t k = 0; k < s.centers; ++k) {
      auto col = s.column(c, k);
      double n = 0.0;
      for (double v : col) n += v * v;
      n = std::sqrt(n);
      require(n > 1e-12, ErrorKind::ZeroVector, "weight column collapsed to zero");
      for (double& v : col) v /= n;
    }
}

MinedPairs to_pairs(const MinedTriplets& t) {
  std::set<std::pair<std::size_t, std::size_t>> pos;
  std::set<std::pair<std::size_t, std::size_t>> neg;
  for (const auto& [a, p, n] : t.triplets) {
    pos.emplace(a, p);
    neg.emplace(a, n);
  }
  return {{pos.begin(), pos.end()}, {neg.begin(), neg.end()}};
}

MinedTriplets to_triplets(const MinedPairs& pairs) {
  std::map<std::size_t, std::vector<std::size_t>> negs;
  for (const auto& [a, n] : pairs.negatives) negs[a].push_back(n);
  MinedTriplets out;
  for (const auto& [a, p] : pairs.positives) {
    const auto it = negs.find(a);
    if (it == negs.end()) continue;
    for (std::size_t n : it->second) out.triplets.push_back({a, p, n});
  }
  return out;
}

}  // namespace dml
