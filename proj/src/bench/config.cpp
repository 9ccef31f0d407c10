#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "toml.hpp"

#include "dml/bench.hpp"
#include "dml/error.hpp"

namespace dml {

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  fail(ErrorKind::ValidationError, path + ": " + what);
}

// Strips the "Kind: " prefix so rewrapped messages read once.
std::string bare(const Error& e) {
  std::string msg = e.what();
  const std::string prefix = std::string(to_string(e.kind())) + ": ";
  return msg.starts_with(prefix) ? msg.substr(prefix.size()) : msg;
}

template <typename F>
auto validating(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ValidationError) throw;
    invalid(path, bare(e));
  }
}

std::string number_text(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

// Reads keys from one TOML table, remembering which were consumed so that
// anything left over is reported as unknown.
class Table {
 public:
  Table(const toml::table& t, std::string path) : t_(&t), path_(std::move(path)) {}

  std::string path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const toml::node* node(std::string_view key) {
    seen_.insert(std::string(key));
    return t_->get(key);
  }

  std::optional<double> number(std::string_view key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    if (n->is_integer()) return static_cast<double>(*n->value<std::int64_t>());
    if (n->is_floating_point()) return *n->value<double>();
    invalid(path(key), "expected a number");
  }

  std::optional<std::uint64_t> count(std::string_view key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    if (!n->is_integer()) invalid(path(key), "expected an integer");
    const auto v = *n->value<std::int64_t>();
    if (v < 0) invalid(path(key), "must be >= 0");
    return static_cast<std::uint64_t>(v);
  }

  std::optional<std::string> string(std::string_view key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    if (!n->is_string()) invalid(path(key), "expected a string");
    return *n->value<std::string>();
  }

  std::optional<bool> boolean(std::string_view key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    if (!n->is_boolean()) invalid(path(key), "expected true or false");
    return *n->value<bool>();
  }

  std::optional<Table> table(std::string_view key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    if (!n->is_table()) invalid(path(key), "expected a table");
    return Table(*n->as_table(), path(key));
  }

  const toml::array* array(std::string_view key) {
    const auto* n = node(key);
    if (!n) return nullptr;
    if (!n->is_array()) invalid(path(key), "expected an array");
    return n->as_array();
  }

  const toml::table& raw() const { return *t_; }

  void finish() const {
    for (const auto& [k, v] : *t_)
      if (!seen_.count(std::string(k.str()))) invalid(path(k.str()), "unknown key");
  }

 private:
  const toml::table* t_;
  std::string path_;
  std::set<std::string> seen_;
};

SyntheticSpec read_synthetic(Table t) {
  SyntheticSpec s;
  if (auto v = t.count("num_classes")) s.num_classes = *v;
  if (auto v = t.count("dim")) s.dim = *v;
  if (auto v = t.count("samples_per_class")) s.samples_per_class = *v;
  if (auto v = t.number("separation")) s.separation = *v;
  if (auto v = t.number("spread")) s.spread = *v;
  if (auto v = t.count("signal_dim")) s.signal_dim = *v;
  if (auto v = t.number("nuisance_spread")) s.nuisance_spread = *v;
  if (auto v = t.count("seed")) s.seed = *v;
  t.finish();
  validating(t.path(""), [&] { s.validate(); });
  return s;
}

DatasetSource read_dataset(Table t) {
  DatasetSource src;
  if (auto p = t.string("path")) src.path = *p;
  if (auto s = t.table("synthetic")) src.synthetic = read_synthetic(*s);
  t.finish();
  if (src.path.has_value() == src.synthetic.has_value()) invalid("dataset", "give exactly one of path or synthetic");
  return src;
}

struct BatchOverride {
  std::optional<std::size_t> classes, per_class, batch_size;
};

BatchOverride read_batch(Table t) {
  BatchOverride b;
  b.classes = t.count("classes");
  b.per_class = t.count("per_class");
  b.batch_size = t.count("batch_size");
  t.finish();
  if (b.batch_size && b.per_class) invalid(t.path("batch_size"), "give batch_size or per_class, not both");
  return b;
}

void apply_batch(BatchSpec& spec, const BatchOverride& b, const std::string& path) {
  if (b.classes) spec.classes = *b.classes;
  if (b.per_class) spec.per_class = *b.per_class;
  if (b.batch_size) {
    if (spec.classes == 0 || *b.batch_size % spec.classes != 0)
      invalid(path + ".batch_size", "must be a multiple of batch.classes (" + std::to_string(spec.classes) + ")");
    spec.per_class = *b.batch_size / spec.classes;
  }
}

struct MinerOverride {
  std::optional<std::string> name;
  std::optional<double> epsilon, semihard_margin, clamp_min;
};

MinerOverride read_miner(Table t) {
  MinerOverride m;
  m.name = t.string("name");
  m.epsilon = t.number("epsilon");
  m.semihard_margin = t.number("semihard_margin");
  m.clamp_min = t.number("clamp_min");
  t.finish();
  return m;
}

void apply_miner(TrainConfig& cfg, const MinerOverride& m, const std::string& path) {
  if (m.name) cfg.miner = validating(path + ".name", [&] { return parse_miner(*m.name); });
  if (m.epsilon) cfg.miner_params.epsilon = *m.epsilon;
  if (m.semihard_margin) cfg.miner_params.semihard_margin = *m.semihard_margin;
  if (m.clamp_min) cfg.miner_params.clamp_min = *m.clamp_min;
}

HyperparamSpace read_space(const toml::array& arr, const std::string& path) {
  HyperparamSpace space;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!arr[i].is_table()) invalid(p, "expected a table");
    Table t(*arr[i].as_table(), p);
    Dimension d;
    const auto name = t.string("name");
    if (!name) invalid(t.path("name"), "required");
    d.name = *name;
    d.kind = validating(t.path("kind"), [&] { return parse_dimension_kind(t.string("kind").value_or("continuous")); });
    if (d.kind == Dimension::Kind::categorical) {
      const auto* choices = t.array("choices");
      if (!choices) invalid(t.path("choices"), "required for categorical dimensions");
      for (const auto& c : *choices) {
        if (c.is_string())
          d.choices.push_back(*c.value<std::string>());
        else if (c.is_integer())
          d.choices.push_back(std::to_string(*c.value<std::int64_t>()));
        else if (c.is_floating_point())
          d.choices.push_back(number_text(*c.value<double>()));
        else
          invalid(t.path("choices"), "choices must be strings or numbers");
      }
    } else {
      const auto lo = t.number("lo");
      const auto hi = t.number("hi");
      if (!lo || !hi) invalid(p, "lo and hi are required");
      d.lo = *lo;
      d.hi = *hi;
    }
    t.finish();
    space.dims.push_back(std::move(d));
  }
  if (!space.dims.empty()) validating(path, [&] { space.validate(); });
  return space;
}

struct Shared {
  DatasetSource dataset;
  std::uint64_t seed = 0;
  std::size_t n_runs = 10;
  std::filesystem::path out = "runs";
  BatchOverride batch;
  MinerOverride miner;
  TrainConfig trainer;  // loss fields unused
  std::optional<double> loss_lr;
  std::size_t budget = 50;
  SearchStrategy strategy = SearchStrategy::random;
  HyperparamSpace space;
  bool baseline_pca = true;
};

void read_trainer(Table t, Shared& s) {
  TrainConfig& c = s.trainer;
  if (const auto* h = t.array("hidden")) {
    c.hidden.clear();
    for (const auto& v : *h) {
      if (!v.is_integer() || *v.value<std::int64_t>() < 1) invalid(t.path("hidden"), "expected positive integers");
      c.hidden.push_back(static_cast<std::size_t>(*v.value<std::int64_t>()));
    }
  }
  if (auto v = t.count("embed_dim")) c.embed_dim = *v;
  if (auto v = t.number("lr")) c.lr = *v;
  if (auto v = t.number("rms_alpha")) c.rms_alpha = *v;
  if (auto v = t.number("rms_eps")) c.rms_eps = *v;
  if (auto v = t.count("max_epochs")) c.max_epochs = *v;
  if (auto v = t.count("val_interval")) c.val_interval = *v;
  if (auto v = t.count("patience")) c.patience = *v;
  if (auto v = t.number("min_delta")) c.min_delta = *v;
  if (auto v = t.string("metric")) {
    if (*v == "map_at_r")
      c.metric = ValidationMetric::map_at_r;
    else if (*v == "p_at_1")
      c.metric = ValidationMetric::p_at_1;
    else
      invalid(t.path("metric"), "expected map_at_r or p_at_1");
  }
  s.loss_lr = t.number("loss_lr");
  t.finish();
}

BenchConfig build(const Shared& s, Table entry) {
  BenchConfig cfg;
  cfg.dataset = s.dataset;
  cfg.seed = s.seed;
  cfg.n_runs = s.n_runs;
  cfg.out_dir = s.out;
  cfg.budget = s.budget;
  cfg.strategy = s.strategy;
  cfg.baseline_pca = s.baseline_pca;
  cfg.space = s.space;

  const auto name = entry.string("name");
  if (!name) invalid(entry.path("name"), "required");
  TrainConfig& t = cfg.train;
  t = s.trainer;
  t.loss = validating(entry.path("name"), [&] { return parse_loss(*name); });
  t.loss_params = default_params(t.loss);
  if (s.loss_lr) t.loss_params.param_lr = *s.loss_lr;
  t.batch = is_classification(t.loss) ? BatchSpec{32, 1} : BatchSpec{8, 4};
  t.miner = MinerKind::none;
  t.miner_params = {};
  t.seed = s.seed;
  cfg.name = entry.string("label").value_or(*name);

  if (auto params = entry.table("params")) {
    for (const auto& [k, v] : params->raw()) {
      const std::string key(k.str());
      const auto value = params->number(key);
      validating(params->path(key), [&] { set_param(t.loss_params, key, *value); });
    }
  }
  apply_batch(t.batch, s.batch, "batch");
  if (auto b = entry.table("batch")) apply_batch(t.batch, read_batch(*b), b->path(""));
  apply_miner(t, s.miner, "miner");
  if (const auto* m = entry.node("miner")) {
    if (m->is_string())
      apply_miner(t, {*m->value<std::string>(), {}, {}, {}}, entry.path("miner"));
    else if (m->is_table())
      apply_miner(t, read_miner(Table(*m->as_table(), entry.path("miner"))), entry.path("miner"));
    else
      invalid(entry.path("miner"), "expected a miner name or table");
  }
  if (const auto* sp = entry.array("space")) cfg.space = read_space(*sp, entry.path("space"));
  entry.finish();

  validating(entry.path(""), [&] { t.validate(); });
  if (!cfg.space.dims.empty()) {
    Rng probe = make_rng(0);
    const Assignment a = cfg.space.sample(probe);
    validating(entry.path("space"), [&] { apply_assignment(t, a); });
  }
  return cfg;
}

}  // namespace

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json config_json(const BenchConfig& cfg) {
  nlohmann::json ds;
  if (cfg.dataset.path) ds["path"] = cfg.dataset.path->string();
  if (const auto& s = cfg.dataset.synthetic) {
    ds["synthetic"] = {{"num_classes", s->num_classes}, {"dim", s->dim},
                       {"samples_per_class", s->samples_per_class}, {"separation", s->separation},
                       {"spread", s->spread}, {"signal_dim", s->signal()},
                       {"nuisance_spread", s->nuisance()}, {"seed", s->seed}};
  }
  const TrainConfig& t = cfg.train;
  nlohmann::json params;
  for (auto name : param_names()) params[std::string(name)] = get_param(t.loss_params, name);
  nlohmann::json space = nlohmann::json::array();
  for (const auto& d : cfg.space.dims)
    space.push_back({{"name", d.name}, {"kind", to_string(d.kind)}, {"lo", d.lo}, {"hi", d.hi}, {"choices", d.choices}});
  return {{"dataset", ds},
          {"name", cfg.name},
          {"loss", to_string(t.loss)},
          {"loss_params", params},
          {"miner", to_string(t.miner)},
          {"miner_params",
           {{"epsilon", t.miner_params.epsilon},
            {"semihard_margin", t.miner_params.semihard_margin},
            {"clamp_min", t.miner_params.clamp_min}}},
          {"batch", {{"classes", t.batch.classes}, {"per_class", t.batch.per_class}}},
          {"trainer",
           {{"hidden", t.hidden},
            {"embed_dim", t.embed_dim},
            {"lr", t.lr},
            {"rms_alpha", t.rms_alpha},
            {"rms_eps", t.rms_eps},
            {"max_epochs", t.max_epochs},
            {"val_interval", t.val_interval},
            {"patience", t.patience},
            {"min_delta", t.min_delta},
            {"metric", t.metric == ValidationMetric::map_at_r ? "map_at_r" : "p_at_1"}}},
          {"space", space},
          {"budget", cfg.budget},
          {"strategy", to_string(cfg.strategy)},
          {"n_runs", cfg.n_runs},
          {"seed", cfg.seed},
          {"baseline_pca", cfg.baseline_pca}};
}

void rehash(BenchConfig& cfg) { cfg.hash = fnv1a_hex(config_json(cfg).dump()); }

std::vector<BenchConfig> parse_configs(std::string_view toml_text, std::string_view source) {
  toml::table root_table;
  try {
    root_table = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    fail(ErrorKind::ParseError, msg.str());
  }
  Table root(root_table, "");
  Shared s;
  if (auto v = root.count("seed")) s.seed = *v;
  if (auto v = root.count("n_runs")) s.n_runs = *v;
  if (s.n_runs < 2) invalid("n_runs", "must be >= 2 for confidence intervals");
  if (auto v = root.string("out")) s.out = *v;
  auto ds = root.table("dataset");
  if (!ds) invalid("dataset", "required");
  s.dataset = read_dataset(*ds);
  if (auto b = root.table("batch")) s.batch = read_batch(*b);
  if (auto m = root.table("miner")) s.miner = read_miner(*m);
  if (auto t = root.table("trainer")) read_trainer(*t, s);
  if (auto t = root.table("search")) {
    if (auto v = t->count("budget")) s.budget = *v;
    if (s.budget < 1) invalid("search.budget", "must be >= 1");
    if (auto v = t->string("strategy")) s.strategy = validating("search.strategy", [&] { return parse_strategy(*v); });
    if (const auto* sp = t->array("space")) s.space = read_space(*sp, "search.space");
    t->finish();
  }
  if (auto t = root.table("baseline")) {
    if (auto v = t->boolean("pca")) s.baseline_pca = *v;
    t->finish();
  }

  std::vector<BenchConfig> out;
  const auto* loss = root.node("loss");
  if (!loss) invalid("loss", "required");
  if (loss->is_string()) {
    toml::table t;
    t.insert("name", *loss->value<std::string>());
    out.push_back(build(s, Table(t, "loss")));
  } else if (loss->is_table()) {
    out.push_back(build(s, Table(*loss->as_table(), "loss")));
  } else if (loss->is_array()) {
    const auto& arr = *loss->as_array();
    if (arr.empty()) invalid("loss", "no losses given");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = "loss[" + std::to_string(i) + "]";
      if (!arr[i].is_table()) invalid(p, "expected a table");
      out.push_back(build(s, Table(*arr[i].as_table(), p)));
    }
  } else {
    invalid("loss", "expected a name, a table or an array of tables");
  }
  root.finish();

  std::set<std::string> names;
  for (auto& c : out) {
    if (!names.insert(c.name).second) invalid("loss", "row name '" + c.name + "' repeats; set distinct labels");
    c.source_text = std::string(toml_text);
    rehash(c);
  }
  return out;
}

std::vector<BenchConfig> load_configs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_configs(ss.str(), path.string());
}

BenchConfig load_config(const std::filesystem::path& path) {
  auto all = load_configs(path);
  if (all.size() != 1) invalid("loss", "expected exactly one loss in " + path.string());
  return std::move(all.front());
}

}  // namespace dml
