#include "darkhash/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#define TOML_ENABLE_FORMATTERS 0
#include <toml.hpp>

#include "darkhash/checkpoint.hpp"
#include "darkhash/errors.hpp"
#include "darkhash/rng.hpp"

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t config keys are read as uint64");

namespace darkhash {

namespace {

// Reads typed keys from one TOML table and rejects keys nobody asked for,
// so a misspelt option fails loudly instead of silently using a default.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool present() const { return table_ != nullptr; }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!table_) return;
    const toml::node* node = table_->get(key);
    if (!node) return;
    read(*node, key, out);
  }

  const toml::table* subtable(const std::string& key) {
    seen_.insert(key);
    if (!table_) return nullptr;
    const toml::node* node = table_->get(key);
    if (!node) return nullptr;
    if (!node->is_table()) fail(key, "a table");
    return node->as_table();
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, _] : *table_) {
      if (!seen_.count(std::string(key.str()))) {
        throw ConfigError("unknown key '" + std::string(key.str()) + "' in [" + name_ + "]");
      }
    }
  }

 private:
  [[noreturn]] void fail(const std::string& key, const char* expected) const {
    throw ConfigError("[" + name_ + "] " + key + " must be " + expected);
  }

  void read(const toml::node& n, const std::string& key, double& out) const {
    auto v = n.value<double>();
    if (!v) fail(key, "a number");
    out = *v;
  }
  void read(const toml::node& n, const std::string& key, int& out) const {
    auto v = n.value<std::int64_t>();
    if (!v || !n.is_integer()) fail(key, "an integer");
    out = static_cast<int>(*v);
  }
  void read(const toml::node& n, const std::string& key, std::uint64_t& out) const {
    auto v = n.value<std::int64_t>();
    if (!v || !n.is_integer() || *v < 0) fail(key, "a nonnegative integer");
    out = static_cast<std::uint64_t>(*v);
  }
  void read(const toml::node& n, const std::string& key, bool& out) const {
    auto v = n.value<bool>();
    if (!v) fail(key, "a boolean");
    out = *v;
  }
  void read(const toml::node& n, const std::string& key, std::string& out) const {
    auto v = n.value<std::string>();
    if (!v) fail(key, "a string");
    out = *v;
  }
  void read(const toml::node& n, const std::string& key, std::filesystem::path& out) const {
    std::string s;
    read(n, key, s);
    out = s;
  }
  template <typename T>
  void read(const toml::node& n, const std::string& key, std::vector<T>& out) const {
    const toml::array* arr = n.as_array();
    if (!arr) fail(key, "an array");
    out.clear();
    for (const auto& item : *arr) {
      T v{};
      read(item, key, v);
      out.push_back(v);
    }
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_train(Section& s, TrainConfig& cfg) {
  std::string opt = to_string(cfg.optimizer);
  s.get("optimizer", opt);
  cfg.optimizer = parse_optimizer(opt);
  s.get("learning_rate", cfg.learning_rate);
  s.get("batch_size", cfg.batch_size);
  s.get("epochs", cfg.epochs);
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "rmsprop") return OptimizerKind::RmsProp;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected rmsprop or sgd)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "rmsprop"; }

FreezePolicy freeze_policy(const AttackSection& attack) {
  if (attack.freeze == "all_conv") return FreezePolicy::all_conv();
  if (attack.freeze == "none") return FreezePolicy::none();
  if (attack.freeze == "first_n") return FreezePolicy::first_n(attack.freeze_n);
  throw ConfigError("unknown freeze policy '" + attack.freeze + "' (expected all_conv, none or first_n)");
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, std::string_view stream) {
  return derive_seed(cfg.seed, stream);
}

ExperimentConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "malformed config at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }

  ExperimentConfig cfg;
  Section top(&root, "root");
  top.get("seed", cfg.seed);
  top.get("output_dir", cfg.output_dir);

  Section ds(top.subtable("dataset"), "dataset");
  ds.get("source", cfg.dataset.source);
  ds.get("classes", cfg.dataset.classes);
  ds.get("per_class", cfg.dataset.per_class);
  ds.get("image_size", cfg.dataset.image_size);
  ds.get("channels", cfg.dataset.channels);
  ds.get("noise_std", cfg.dataset.noise_std);
  ds.get("root", cfg.dataset.root);
  ds.get("manifest", cfg.dataset.manifest);
  ds.finish();
  cfg.dataset.root = resolve(cfg.dataset.root, base_dir);
  if (!cfg.dataset.manifest.empty() && !cfg.dataset.manifest.is_absolute()) {
    cfg.dataset.manifest = cfg.dataset.root / cfg.dataset.manifest;
  }

  Section sur(top.subtable("surrogate"), "surrogate");
  sur.get("kind", cfg.surrogate.kind);
  sur.get("count", cfg.surrogate.count);
  sur.get("classes", cfg.surrogate.classes);
  sur.get("noise_std", cfg.surrogate.noise_std);
  sur.get("mu", cfg.surrogate.mu);
  sur.get("sigma", cfg.surrogate.sigma);
  sur.finish();

  Section vic(top.subtable("victim"), "victim");
  std::string method = to_string(cfg.victim.method);
  vic.get("method", method);
  cfg.victim.method = parse_victim_method(method);
  vic.get("bits", cfg.victim.arch.bits);
  vic.get("conv_channels", cfg.victim.arch.conv_channels);
  vic.get("hidden", cfg.victim.arch.hidden);
  read_train(vic, cfg.victim.train);
  vic.finish();

  Section trig(top.subtable("trigger"), "trigger");
  trig.get("size", cfg.trigger.size);
  trig.get("color", cfg.trigger.color);
  trig.get("pattern_png", cfg.trigger.pattern_png);
  trig.get("location", cfg.trigger.location);
  trig.get("transparency", cfg.trigger.transparency);
  trig.finish();
  cfg.trigger.pattern_png = resolve(cfg.trigger.pattern_png, base_dir);

  Section atk(top.subtable("attack"), "attack");
  atk.get("lambda", cfg.attack.lambda);
  atk.get("poisoning_rate", cfg.attack.poisoning_rate);
  atk.get("target_class", cfg.attack.target_class);
  atk.get("distance", cfg.attack.distance);
  atk.get("huber_delta", cfg.attack.huber_delta);
  atk.get("freeze", cfg.attack.freeze);
  atk.get("freeze_n", cfg.attack.freeze_n);
  atk.get("modules", cfg.attack.modules);
  atk.get("exclude_nearest", cfg.attack.exclude_nearest);
  std::string opt = to_string(cfg.attack.optimizer);
  atk.get("optimizer", opt);
  cfg.attack.optimizer = parse_optimizer(opt);
  atk.get("learning_rate", cfg.attack.learning_rate);
  atk.get("lr_multiplier", cfg.attack.lr_multiplier);
  atk.get("batch_size", cfg.attack.batch_size);
  atk.get("epochs", cfg.attack.epochs);
  atk.finish();

  Section ev(top.subtable("eval"), "eval");
  ev.get("topn", cfg.eval.topn);
  ev.get("probe_queries", cfg.eval.probe_queries);
  ev.finish();

  Section def(top.subtable("defense"), "defense");
  def.get("prune_rates", cfg.defense.prune_rates);
  def.get("strip_inputs", cfg.defense.strip_inputs);
  def.get("strip_overlays", cfg.defense.strip_overlays);
  Section ft(def.subtable("finetune"), "defense.finetune");
  read_train(ft, cfg.defense.finetune);
  ft.finish();
  def.finish();

  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

void ExperimentConfig::validate() const {
  if (dataset.source == "synthetic") {
    if (dataset.classes < 2) throw ConfigError("[dataset] classes must be at least 2");
    if (dataset.per_class < 20) throw ConfigError("[dataset] per_class must be at least 20");
    if (dataset.noise_std < 0.0) throw ConfigError("[dataset] noise_std must be nonnegative");
  } else if (dataset.source == "folder") {
    if (!std::filesystem::is_directory(dataset.root)) {
      throw ConfigError("[dataset] root does not exist: " + dataset.root.string());
    }
    if (!std::filesystem::is_regular_file(dataset.manifest)) {
      throw ConfigError("[dataset] manifest does not exist: " + dataset.manifest.string());
    }
  } else {
    throw ConfigError("[dataset] source must be 'synthetic' or 'folder'");
  }
  if (dataset.image_size < 4) throw ConfigError("[dataset] image_size must be at least 4");
  if (dataset.channels != 1 && dataset.channels != 3) throw ConfigError("[dataset] channels must be 1 or 3");

  if (surrogate.kind != "held_out" && surrogate.kind != "gaussian") {
    throw ConfigError("[surrogate] kind must be 'held_out' or 'gaussian'");
  }
  if (surrogate.count < 2) throw ConfigError("[surrogate] count must be at least 2");
  if (surrogate.classes < 1) throw ConfigError("[surrogate] classes must be positive");
  if (surrogate.kind == "gaussian" && !(surrogate.sigma > 0.0)) throw ConfigError("[surrogate] sigma must be positive");

  const int bits = victim.arch.bits;
  if (bits != 16 && bits != 32 && bits != 64) throw ConfigError("[victim] bits must be 16, 32 or 64");
  if (victim.arch.conv_channels.empty()) throw ConfigError("[victim] conv_channels must not be empty");
  for (int c : victim.arch.conv_channels) {
    if (c < 1) throw ConfigError("[victim] conv_channels entries must be positive");
  }
  if (victim.arch.hidden < 0) throw ConfigError("[victim] hidden must be nonnegative");
  victim.train.validate();

  parse_location(trigger.location);
  if (trigger.size < 0 || trigger.size > dataset.image_size) {
    throw ConfigError("[trigger] size must lie in [0, image_size]");
  }
  if (!(trigger.transparency > 0.0 && trigger.transparency <= 1.0)) {
    throw ConfigError("[trigger] transparency must lie in (0, 1]");
  }
  if (trigger.pattern_png.empty()) {
    if (trigger.color.size() != static_cast<std::size_t>(dataset.channels)) {
      throw ConfigError("[trigger] color needs one entry per image channel");
    }
    for (double v : trigger.color) {
      if (v < 0.0 || v > 1.0) throw ConfigError("[trigger] color entries must lie in [0, 1]");
    }
  } else if (!std::filesystem::is_regular_file(trigger.pattern_png)) {
    throw ConfigError("[trigger] pattern_png does not exist: " + trigger.pattern_png.string());
  }

  if (!(attack.lambda >= 0.0)) throw ConfigError("[attack] lambda must be nonnegative");
  if (!(attack.poisoning_rate > 0.0 && attack.poisoning_rate < 1.0)) {
    throw ConfigError("[attack] poisoning_rate must lie in (0, 1)");
  }
  if (attack.distance != "huber" && attack.distance != "squared") {
    throw ConfigError("[attack] distance must be 'huber' or 'squared'");
  }
  freeze_policy(attack);
  ModuleMask::parse(attack.modules);
  if (!(attack.learning_rate > 0.0) || !(attack.lr_multiplier > 0.0)) {
    throw ConfigError("[attack] learning_rate and lr_multiplier must be positive");
  }
  if (attack.batch_size < 2) throw ConfigError("[attack] batch_size must be at least 2");
  if (attack.epochs < 0) throw ConfigError("[attack] epochs must be nonnegative");
  if (surrogate.kind == "held_out" && attack.target_class >= static_cast<std::size_t>(surrogate.classes)) {
    throw ConfigError("[attack] target_class must name a surrogate class");
  }

  if (eval.probe_queries < 1) throw ConfigError("[eval] probe_queries must be positive");
  for (std::size_t n : eval.topn) {
    if (n == 0) throw ConfigError("[eval] topn entries must be positive");
  }
  for (std::size_t i = 0; i < defense.prune_rates.size(); ++i) {
    const double r = defense.prune_rates[i];
    if (r < 0.0 || r > 0.9) throw ConfigError("[defense] prune_rates must lie in [0, 0.9]");
    if (i > 0 && r <= defense.prune_rates[i - 1]) throw ConfigError("[defense] prune_rates must increase strictly");
  }
  if (defense.strip_overlays < 8) throw ConfigError("[defense] strip_overlays must be at least 8");
  if (defense.strip_inputs < 1) throw ConfigError("[defense] strip_inputs must be positive");
  defense.finetune.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  using nlohmann::json;
  json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["dataset"] = {{"source", dataset.source},       {"classes", dataset.classes},
                  {"per_class", dataset.per_class}, {"image_size", dataset.image_size},
                  {"channels", dataset.channels},   {"noise_std", dataset.noise_std},
                  {"root", dataset.root.string()},  {"manifest", dataset.manifest.string()}};
  j["surrogate"] = {{"kind", surrogate.kind},           {"count", surrogate.count},
                    {"classes", surrogate.classes},     {"noise_std", surrogate.noise_std},
                    {"mu", surrogate.mu},               {"sigma", surrogate.sigma}};
  json vt = darkhash::to_json(victim.train);
  vt.erase("seed");
  j["victim"] = {{"method", to_string(victim.method)},
                 {"bits", victim.arch.bits},
                 {"conv_channels", victim.arch.conv_channels},
                 {"hidden", victim.arch.hidden},
                 {"train", vt}};
  j["trigger"] = {{"size", trigger.size},
                  {"color", trigger.color},
                  {"pattern_png", trigger.pattern_png.string()},
                  {"location", trigger.location},
                  {"transparency", trigger.transparency}};
  j["attack"] = {{"lambda", attack.lambda},
                 {"poisoning_rate", attack.poisoning_rate},
                 {"target_class", attack.target_class},
                 {"distance", attack.distance},
                 {"huber_delta", attack.huber_delta},
                 {"freeze", attack.freeze},
                 {"freeze_n", attack.freeze_n},
                 {"modules", attack.modules},
                 {"exclude_nearest", attack.exclude_nearest},
                 {"optimizer", to_string(attack.optimizer)},
                 {"learning_rate", attack.learning_rate},
                 {"lr_multiplier", attack.lr_multiplier},
                 {"batch_size", attack.batch_size},
                 {"epochs", attack.epochs}};
  j["eval"] = {{"topn", eval.topn}, {"probe_queries", eval.probe_queries}};
  json ft = darkhash::to_json(defense.finetune);
  ft.erase("seed");
  j["defense"] = {{"prune_rates", defense.prune_rates},
                  {"strip_inputs", defense.strip_inputs},
                  {"strip_overlays", defense.strip_overlays},
                  {"finetune", ft}};
  return j;
}

}  // namespace darkhash
