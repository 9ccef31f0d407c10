#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "dml/error.hpp"
#include "dml/protocol.hpp"
#include "dml/rng.hpp"

namespace dml {

namespace {

double parse_number(const std::string& name, const ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  const auto& s = std::get<std::string>(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::ValidationError,
          "search value '" + s + "' for '" + name + "' is not a number");
  return out;
}

std::string as_text(const ParamValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return std::to_string(std::get<double>(v));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

bool recoverable(const Error& e) {
  return e.kind() == ErrorKind::NonFiniteLoss || e.kind() == ErrorKind::ZeroVector;
}

}  // namespace

std::string_view to_string(Dimension::Kind kind) {
  switch (kind) {
    case Dimension::Kind::continuous: return "continuous";
    case Dimension::Kind::log_continuous: return "log";
    case Dimension::Kind::categorical: return "categorical";
  }
  return "?";
}

Dimension::Kind parse_dimension_kind(std::string_view name) {
  for (auto k : {Dimension::Kind::continuous, Dimension::Kind::log_continuous, Dimension::Kind::categorical})
    if (to_string(k) == name) return k;
  fail(ErrorKind::UnknownKind, "unknown dimension kind '" + std::string(name) + "'");
}

std::string_view to_string(SearchStrategy s) { return s == SearchStrategy::random ? "random" : "model_based"; }

SearchStrategy parse_strategy(std::string_view name) {
  if (name == "random") return SearchStrategy::random;
  if (name == "model_based") return SearchStrategy::model_based;
  fail(ErrorKind::UnknownKind, "unknown search strategy '" + std::string(name) + "'");
}

void HyperparamSpace::validate() const {
  require(!dims.empty(), ErrorKind::EmptySpace, "hyperparameter space has no dimensions");
  std::set<std::string> names;
  for (const auto& d : dims) {
    require(!d.name.empty(), ErrorKind::ValidationError, "dimension without a name");
    require(names.insert(d.name).second, ErrorKind::ValidationError, "dimension '" + d.name + "' repeats");
    if (d.kind == Dimension::Kind::categorical) {
      require(!d.choices.empty(), ErrorKind::ValidationError, "dimension '" + d.name + "' has no choices");
    } else {
      require(std::isfinite(d.lo) && std::isfinite(d.hi) && d.lo < d.hi, ErrorKind::ValidationError,
              "dimension '" + d.name + "' needs lo < hi");
      require(d.kind != Dimension::Kind::log_continuous || d.lo > 0.0, ErrorKind::ValidationError,
              "log dimension '" + d.name + "' needs lo > 0");
    }
  }
}

bool HyperparamSpace::categorical_only() const {
  return std::all_of(dims.begin(), dims.end(), [](const Dimension& d) { return d.kind == Dimension::Kind::categorical; });
}

Assignment HyperparamSpace::sample(Rng& rng) const {
  Assignment a;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& d : dims) {
    switch (d.kind) {
      case Dimension::Kind::continuous: a[d.name] = d.lo + (d.hi - d.lo) * u(rng); break;
      case Dimension::Kind::log_continuous:
        a[d.name] = std::exp(std::log(d.lo) + (std::log(d.hi) - std::log(d.lo)) * u(rng));
        break;
      case Dimension::Kind::categorical: {
        std::uniform_int_distribution<std::size_t> pick(0, d.choices.size() - 1);
        a[d.name] = d.choices[pick(rng)];
        break;
      }
    }
  }
  return a;
}

std::vector<double> HyperparamSpace::encode(const Assignment& a) const {
  std::vector<double> x;
  for (const auto& d : dims) {
    const auto it = a.find(d.name);
    require(it != a.end(), ErrorKind::ValidationError, "assignment lacks '" + d.name + "'");
    if (d.kind == Dimension::Kind::categorical) {
      const std::string s = as_text(it->second);
      for (const auto& c : d.choices) x.push_back(c == s ? 1.0 : 0.0);
    } else if (d.kind == Dimension::Kind::log_continuous) {
      const double v = parse_number(d.name, it->second);
      x.push_back((std::log(v) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo)));
    } else {
      x.push_back((parse_number(d.name, it->second) - d.lo) / (d.hi - d.lo));
    }
  }
  return x;
}

TrainConfig apply_assignment(TrainConfig cfg, const Assignment& a) {
  const auto loss_names = param_names();
  for (const auto& [name, value] : a) {
    if (name == "miner") {
      try {
        cfg.miner = parse_miner(as_text(value));
      } catch (const Error& e) {
        fail(ErrorKind::ValidationError, e.what());
      }
    } else if (name == "lr") {
      cfg.lr = parse_number(name, value);
    } else if (name == "epsilon") {
      cfg.miner_params.epsilon = parse_number(name, value);
    } else if (name == "semihard_margin") {
      cfg.miner_params.semihard_margin = parse_number(name, value);
    } else if (name == "clamp_min") {
      cfg.miner_params.clamp_min = parse_number(name, value);
    } else if (std::find(loss_names.begin(), loss_names.end(), name) != loss_names.end()) {
      try {
        set_param(cfg.loss_params, name, parse_number(name, value));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::ValidationError) throw;
        fail(ErrorKind::ValidationError, e.what());
      }
    } else {
      fail(ErrorKind::ValidationError, "unknown hyperparameter '" + name + "'");
    }
  }
  return cfg;
}

std::size_t argmax_score(std::span<const double> scores) {
  require(!scores.empty(), ErrorKind::InvalidArgument, "no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

std::vector<double> expected_improvement(const std::vector<std::vector<double>>& xs, std::span<const double> ys,
                                         const std::vector<std::vector<double>>& candidates, double length_scale) {
  const std::size_t n = xs.size();
  require(n >= 1 && ys.size() == n, ErrorKind::LengthMismatch, "one score per observed point expected");
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  const double sd = n > 1 && var > 0.0 ? std::sqrt(var / static_cast<double>(n - 1)) : 1.0;

  auto kernel = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
    return std::exp(-0.5 * d2 / (length_scale * length_scale));
  };
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd y(n);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    y(static_cast<Eigen::Index>(i)) = (ys[i] - mean) / sd;
    best = std::max(best, y(static_cast<Eigen::Index>(i)));
    for (std::size_t j = 0; j < n; ++j)
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(xs[i], xs[j]) + (i == j ? 1e-6 : 0.0);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(K);
  require(llt.info() == Eigen::Success, ErrorKind::DegenerateData, "surrogate covariance is not positive definite");
  const Eigen::VectorXd alpha = llt.solve(y);

  constexpr double xi = 0.01;
  std::vector<double> ei(candidates.size());
  Eigen::VectorXd ks(n);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) ks(static_cast<Eigen::Index>(i)) = kernel(candidates[c], xs[i]);
    const double mu = ks.dot(alpha);
    const double s2 = std::max(1.0 - ks.dot(llt.solve(ks)), 1e-12);
    const double s = std::sqrt(s2);
    const double z = (mu - best - xi) / s;
    ei[c] = std::max(0.0, (mu - best - xi) * normal_cdf(z) + s * normal_pdf(z));
  }
  return ei;
}

SearchResult hyperparameter_search(const HyperparamSpace& space, const TrainConfig& base, const Dataset& data,
                                   const FoldPlan& plan, const SearchOptions& opts) {
  space.validate();
  require(opts.budget >= 1, ErrorKind::InvalidArgument, "search budget must be >= 1");
  Rng rng = make_rng(opts.seed, 0x5ea);
  TrainConfig trial_base = base;
  trial_base.seed = mix_seed(opts.seed, 0x7a1);
  const bool use_model = opts.strategy == SearchStrategy::model_based && !space.categorical_only();

  SearchResult out;
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (std::size_t t = 0; t < opts.budget; ++t) {
    Assignment a;
    if (!use_model || t < std::max<std::size_t>(1, opts.initial_random)) {
      a = space.sample(rng);
    } else {
      std::vector<Assignment> pool;
      std::vector<std::vector<double>> encoded;
      for (std::size_t c = 0; c < std::max<std::size_t>(1, opts.candidates); ++c) {
        pool.push_back(space.sample(rng));
        encoded.push_back(space.encode(pool.back()));
      }
      const auto ei = expected_improvement(xs, ys, encoded);
      a = pool[argmax_score(ei)];
    }
    const TrainConfig cfg = apply_assignment(trial_base, a);

    TrialRecord rec;
    rec.index = t;
    rec.assignment = a;
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto cv = run_cross_validation(data, plan, cfg, opts.jobs);
      rec.fold_scores = cv.fold_scores;
      rec.mean_score = cv.mean_score;
      rec.seeds = cv.seeds;
    } catch (const Error& e) {
      if (!recoverable(e)) throw;
      rec.error = e.what();
      rec.mean_score = 0.0;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    xs.push_back(space.encode(a));
    ys.push_back(rec.mean_score);
    if (opts.on_trial) opts.on_trial(rec);
    out.trials.push_back(std::move(rec));
  }
  out.best = argmax_score(ys);
  return out;
}

void to_json(nlohmann::json& j, const ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v))
    j = *d;
  else
    j = std::get<std::string>(v);
}

void to_json(nlohmann::json& j, const TrialRecord& t) {
  nlohmann::json a = nlohmann::json::object();
  for (const auto& [k, v] : t.assignment) to_json(a[k], v);
  j = {{"index", t.index},         {"assignment", a},       {"fold_scores", t.fold_scores},
       {"mean_score", t.mean_score}, {"seeds", t.seeds}, {"wall_seconds", t.wall_seconds}};
  if (t.error) j["error"] = *t.error;
}

void from_json(const nlohmann::json& j, TrialRecord& t) {
  t.index = j.at("index").get<std::size_t>();
  t.assignment.clear();
  for (const auto& [k, v] : j.at("assignment").items())
    t.assignment[k] = v.is_string() ? ParamValue(v.get<std::string>()) : ParamValue(v.get<double>());
  t.fold_scores = j.at("fold_scores").get<std::vector<double>>();
  t.mean_score = j.at("mean_score").get<double>();
  t.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  t.wall_seconds = j.value("wall_seconds", 0.0);
  t.error = j.contains("error") ? std::optional<std::string>(j["error"].get<std::string>()) : std::nullopt;
}

}  // namespace dml
