#include "darkhash/experiment.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "darkhash/checkpoint.hpp"
#include "darkhash/code_file.hpp"
#include "darkhash/defenses.hpp"
#include "darkhash/errors.hpp"
#include "darkhash/kernel.hpp"
#include "darkhash/plots.hpp"
#include "darkhash/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace darkhash {

namespace {

constexpr const char* kRecordFile = "run_record.json";
constexpr const char* kVictimFile = "victim.dhm";
constexpr const char* kBackdoorFile = "backdoored.dhm";

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_bytes(path));
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

class Sha1 {
 public:
  Sha1() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha1(), nullptr) != 1) throw Error("SHA-1 unavailable");
  }
  void update(const std::string& data) { EVP_DigestUpdate(ctx_.get(), data.data(), data.size()); }
  // Git blob framing keeps concatenated inputs unambiguous.
  void blob(const std::string& data) {
    update("blob " + std::to_string(data.size()));
    update(std::string(1, '\0'));
    update(data);
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    std::ostringstream s;
    for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return s.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

RunRecord open_record(const StageContext& ctx) {
  const std::string hash = content_hash(ctx.cfg);
  const fs::path path = ctx.out / kRecordFile;
  if (fs::exists(path)) {
    RunRecord rec = RunRecord::from_json(read_json(path));
    if (rec.content_hash == hash) return rec;
    spdlog::warn("config changed since {} was written; starting a fresh run record", path.string());
  }
  RunRecord rec;
  json snapshot = ctx.cfg.to_json();
  snapshot["output_dir"] = ctx.out.string();
  rec.config = snapshot;
  rec.content_hash = hash;
  return rec;
}

void save_record(const StageContext& ctx, const RunRecord& rec) { write_json(ctx.out / kRecordFile, rec.to_json()); }

fs::path require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing " + path.string() + " (run `" + producer + "` first)");
  }
  return path;
}

std::string format_value(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

double parse_double(const std::string& knob, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("ablation knob " + knob + " needs a number, got '" + value + "'");
  }
}

int parse_int(const std::string& knob, const std::string& value) {
  const double v = parse_double(knob, value);
  if (v != std::floor(v)) throw ConfigError("ablation knob " + knob + " needs an integer, got '" + value + "'");
  return static_cast<int>(v);
}

void write_pr_csv(const fs::path& path, const std::vector<PrPoint>& points) {
  std::ostringstream s;
  s << "recall,precision\n";
  for (const auto& p : points) s << format_value(p.recall) << ',' << format_value(p.precision) << '\n';
  write_text(path, s.str());
}

void write_loss_csv(const fs::path& path, const EpochLog& log) {
  std::ostringstream s;
  s << "epoch,loss\n";
  for (std::size_t e = 0; e < log.mean_loss.size(); ++e) s << e << ',' << format_value(log.mean_loss[e]) << '\n';
  write_text(path, s.str());
}

struct LoadedModel {
  HashModel model;
  json metadata;
};

LoadedModel load_model(const fs::path& path, const std::string& producer) {
  Checkpoint ck = load_checkpoint(require(path, producer));
  return {std::move(ck.model), std::move(ck.metadata)};
}

}  // namespace

// ---------------------------------------------------------------------------

DatasetBundle build_mainset(const ExperimentConfig& cfg) {
  if (cfg.dataset.source == "folder") {
    return ingest_image_folder(cfg.dataset.root, cfg.dataset.manifest, cfg.dataset.image_size);
  }
  SyntheticOptions o;
  o.classes = cfg.dataset.classes;
  o.per_class = cfg.dataset.per_class;
  o.image_size = cfg.dataset.image_size;
  o.channels = cfg.dataset.channels;
  o.noise_std = cfg.dataset.noise_std;
  o.seed = stage_seed(cfg, "data");
  return generate_synthetic_mainset(o);
}

std::vector<LabeledImage> build_surrogate(const ExperimentConfig& cfg) {
  const auto& s = cfg.surrogate;
  if (s.kind == "gaussian") {
    return generate_gaussian_surrogate(s.count, cfg.dataset.image_size, s.mu, s.sigma, stage_seed(cfg, "surrogate"),
                                       s.classes, cfg.dataset.channels);
  }
  // Held-out classes come from the same pattern family as a synthetic main
  // set, starting after its last class, so they never coincide with it.
  const int first = cfg.dataset.source == "synthetic" ? cfg.dataset.classes : 0;
  return generate_held_out_surrogate(s.count, s.classes, first, cfg.dataset.image_size, s.noise_std,
                                     stage_seed(cfg, "data"), cfg.dataset.channels);
}

TriggerSpec build_trigger(const ExperimentConfig& cfg) {
  const auto& t = cfg.trigger;
  const int size = t.size > 0 ? t.size : scaled_trigger_size(cfg.dataset.image_size);
  const TriggerLocation loc = parse_location(t.location);
  if (!t.pattern_png.empty()) return trigger_from_png(t.pattern_png, size, loc, t.transparency);
  return solid_trigger(size, t.color, loc, t.transparency);
}

AttackConfig build_attack_config(const ExperimentConfig& cfg) {
  const auto& a = cfg.attack;
  AttackConfig ac;
  ac.lambda = a.lambda;
  ac.poisoning_rate = a.poisoning_rate;
  ac.trigger = build_trigger(cfg);
  ac.target_class = a.target_class;
  ac.distance = a.distance == "squared" ? DistanceLoss::SquaredError : DistanceLoss::Huber;
  ac.huber_delta = a.huber_delta;
  ac.freeze = freeze_policy(a);
  ac.modules = ModuleMask::parse(a.modules);
  ac.graph.exclude_nearest = a.exclude_nearest;
  ac.train.optimizer = a.optimizer;
  ac.train.learning_rate = a.effective_learning_rate();
  ac.train.batch_size = a.batch_size;
  ac.train.epochs = a.epochs;
  ac.train.seed = stage_seed(cfg, "attack");
  return ac;
}

HashModel initial_model(const ExperimentConfig& cfg, std::size_t /*class_count*/) {
  return HashModel(Shape{cfg.dataset.channels, cfg.dataset.image_size, cfg.dataset.image_size}, cfg.victim.arch,
                   stage_seed(cfg, "init"));
}

HashModel fit_victim(const ExperimentConfig& cfg, const DatasetBundle& data, EpochLog* log) {
  TrainConfig tc = cfg.victim.train;
  tc.seed = stage_seed(cfg, "victim");
  HashModel model = train_victim(cfg.victim.method, initial_model(cfg, data.class_count), data, tc, log);
  round_to_float(model);
  return model;
}

AttackResult fit_attack(const ExperimentConfig& cfg, const HashModel& victim,
                        const std::vector<LabeledImage>& surrogate) {
  AttackResult res = run_attack(victim, surrogate, build_attack_config(cfg));
  round_to_float(res.model);
  return res;
}

std::vector<LabeledImage> apply_trigger_all(std::span<const LabeledImage> images, const TriggerSpec& trigger,
                                            std::uint64_t seed) {
  std::vector<LabeledImage> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(apply_trigger(images[i], trigger, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

EvalReport evaluate_model(const ExperimentConfig& cfg, const HashModel& model, const DatasetBundle& data,
                          const TriggerSpec* trigger, bool use_kernel) {
  if (data.query.empty()) throw InvalidInputError("evaluation needs a nonempty query split");
  std::optional<fs::path> kernel;
  if (use_kernel) {
    kernel = find_kernel();
    if (!kernel) throw KernelError("--use-kernel given but no hamming-kernel executable was found");
  }

  const CodeDatabase db = encode_database(model, data.database);
  const auto qcodes = quantize_rows(model.features(data.query));
  const auto qlabels = labels_of(data.query);

  EvalReport report;
  if (kernel) {
    CodeDatabase qdb;
    for (std::size_t i = 0; i < qcodes.size(); ++i) qdb.push_back(qcodes[i], qlabels[i], data.query[i].id);
    report.map = kernel_map(*kernel, qdb, db);
  } else {
    report.map = map_from_codes(qcodes, qlabels, db);
  }
  report.pr_points = pr_curve_from_codes(qcodes, qlabels, db);
  for (std::size_t n : cfg.eval.topn) report.precision_at[n] = precision_at_topn_from_codes(qcodes, qlabels, db, n);

  if (trigger) {
    const auto triggered = apply_trigger_all(data.query, *trigger, stage_seed(cfg, "eval"));
    const auto tcodes = quantize_rows(model.features(triggered));
    const std::size_t probes = std::min<std::size_t>(tcodes.size(), static_cast<std::size_t>(cfg.eval.probe_queries));
    const std::size_t target = identify_from_codes(std::span(tcodes).first(probes), db);
    report.identified_target = target;
    if (kernel) {
      CodeDatabase tdb;
      for (std::size_t i = 0; i < tcodes.size(); ++i) tdb.push_back(tcodes[i], qlabels[i], triggered[i].id);
      report.t_map = kernel_map(*kernel, tdb, db, target);
    } else {
      report.t_map = t_map_from_codes(tcodes, db, target);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& ablation_knobs() {
  static const std::vector<std::string> knobs{"lambda",          "poisoning_rate", "trigger_size", "location",
                                              "transparency",    "surrogate_count", "freeze_depth",
                                              "learning_rate",   "seed",           "module_mask"};
  return knobs;
}

ExperimentConfig with_knob(ExperimentConfig cfg, const std::string& knob, const std::string& value) {
  if (knob == "lambda") {
    cfg.attack.lambda = parse_double(knob, value);
  } else if (knob == "poisoning_rate") {
    cfg.attack.poisoning_rate = parse_double(knob, value);
  } else if (knob == "trigger_size") {
    cfg.trigger.size = parse_int(knob, value);
  } else if (knob == "location") {
    cfg.trigger.location = value;
  } else if (knob == "transparency") {
    cfg.trigger.transparency = parse_double(knob, value);
  } else if (knob == "surrogate_count") {
    cfg.surrogate.count = parse_int(knob, value);
  } else if (knob == "freeze_depth") {
    cfg.attack.freeze = "first_n";
    cfg.attack.freeze_n = parse_int(knob, value);
  } else if (knob == "learning_rate") {
    cfg.attack.learning_rate = parse_double(knob, value);
  } else if (knob == "seed") {
    const int s = parse_int(knob, value);
    if (s < 0) throw ConfigError("seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(s);
  } else if (knob == "module_mask") {
    cfg.attack.modules = value;
  } else {
    throw ConfigError("unknown ablation knob '" + knob + "'");
  }
  cfg.validate();
  return cfg;
}

std::vector<AblationRow> ablate(const ExperimentConfig& cfg, const std::string& knob,
                                const std::vector<std::string>& values, const HashModel* victim,
                                const DatasetBundle* data) {
  if (std::find(ablation_knobs().begin(), ablation_knobs().end(), knob) == ablation_knobs().end()) {
    throw ConfigError("unknown ablation knob '" + knob + "'");
  }
  const bool retrain = knob == "seed";
  std::optional<DatasetBundle> own_data;
  std::optional<HashModel> own_victim;
  if (!retrain) {
    if (!data) data = &own_data.emplace(build_mainset(cfg));
    if (!victim) victim = &own_victim.emplace(fit_victim(cfg, *data));
  }

  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    AblationRow row;
    row.value = value;
    try {
      const ExperimentConfig point = with_knob(cfg, knob, value);
      if (retrain) {
        const DatasetBundle d = build_mainset(point);
        const HashModel v = fit_victim(point, d);
        const AttackResult res = fit_attack(point, v, build_surrogate(point));
        const TriggerSpec trig = build_trigger(point);
        const EvalReport rep = evaluate_model(point, res.model, d, &trig);
        row.map = rep.map;
        row.t_map = *rep.t_map;
      } else {
        const AttackResult res = fit_attack(point, *victim, build_surrogate(point));
        const TriggerSpec trig = build_trigger(point);
        const EvalReport rep = evaluate_model(point, res.model, *data, &trig);
        row.map = rep.map;
        row.t_map = *rep.t_map;
      }
      spdlog::info("ablate {}={}: map {:.4f} t-map {:.4f}", knob, value, row.map, row.t_map);
    } catch (const std::exception& e) {
      row.map = row.t_map = std::nan("");
      row.error = e.what();
      spdlog::error("ablate {}={} failed: {}", knob, value, e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  s << "knob_value,map,t_map\n";
  for (const auto& r : rows) s << r.value << ',' << format_value(r.map) << ',' << format_value(r.t_map) << '\n';
  write_text(path, s.str());
}

// ---------------------------------------------------------------------------

std::string content_hash(const ExperimentConfig& cfg) {
  json snapshot = cfg.to_json();
  snapshot.erase("output_dir");
  Sha1 sha;
  sha.blob(snapshot.dump());
  std::vector<fs::path> inputs;
  if (cfg.dataset.source == "folder") {
    for (const auto& entry : fs::recursive_directory_iterator(cfg.dataset.root)) {
      if (entry.is_regular_file()) inputs.push_back(entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
  }
  if (!cfg.trigger.pattern_png.empty()) inputs.push_back(cfg.trigger.pattern_png);
  for (const auto& p : inputs) sha.blob(read_bytes(p));
  return sha.hex();
}

json RunRecord::to_json() const {
  return {{"config", config},
          {"content_hash", content_hash},
          {"metrics", metrics},
          {"timings", timings},
          {"artifacts", artifacts}};
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  try {
    r.config = j.at("config");
    r.content_hash = j.at("content_hash").get<std::string>();
    r.metrics = j.value("metrics", json::object());
    r.timings = j.value("timings", json::object());
    r.artifacts = j.value("artifacts", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

RunRecord load_record(const fs::path& out) {
  return RunRecord::from_json(read_json(require(out / kRecordFile, "train-victim")));
}

void stage_gen_data(const StageContext& ctx) {
  Stopwatch clock;
  RunRecord rec = open_record(ctx);
  const DatasetBundle data = build_mainset(ctx.cfg);
  export_image_folder(data, ctx.out / "data");
  DatasetBundle sur;
  sur.train = build_surrogate(ctx.cfg);
  sur.class_count = sur.train.empty() ? 0 : sur.train.front().label.size();
  export_image_folder(sur, ctx.out / "surrogate");

  const json metrics = {{"train", data.train.size()},
                        {"query", data.query.size()},
                        {"database", data.database.size()},
                        {"classes", data.class_count},
                        {"surrogate", sur.train.size()}};
  write_json(ctx.out / "data_summary.json", metrics);
  rec.metrics["gen-data"] = metrics;
  rec.timings["gen-data"] = clock.seconds();
  rec.artifacts["data_manifest"] = "data/manifest.csv";
  rec.artifacts["surrogate_manifest"] = "surrogate/manifest.csv";
  rec.artifacts["data_summary"] = "data_summary.json";
  save_record(ctx, rec);
}

void stage_train_victim(const StageContext& ctx) {
  Stopwatch clock;
  RunRecord rec = open_record(ctx);
  const DatasetBundle data = build_mainset(ctx.cfg);
  EpochLog log;
  const HashModel victim = fit_victim(ctx.cfg, data, &log);

  TrainConfig tc = ctx.cfg.victim.train;
  tc.seed = stage_seed(ctx.cfg, "victim");
  save_checkpoint(ctx.out / kVictimFile, victim,
                  {{"role", "victim"},
                   {"method", to_string(ctx.cfg.victim.method)},
                   {"class_count", data.class_count},
                   {"train", to_json(tc)},
                   {"content_hash", rec.content_hash}});
  write_code_file(ctx.out / "victim_db.dhc", encode_database(victim, data.database));
  write_loss_csv(ctx.out / "victim_log.csv", log);

  const double map = evaluate_model(ctx.cfg, victim, data, nullptr, ctx.use_kernel).map;
  const json metrics = {{"map", map}, {"final_loss", log.mean_loss.empty() ? 0.0 : log.mean_loss.back()}};
  spdlog::info("victim benign mAP {:.4f}", map);
  rec.metrics["train-victim"] = metrics;
  rec.timings["train-victim"] = clock.seconds();
  rec.artifacts["victim_checkpoint"] = kVictimFile;
  rec.artifacts["victim_codes"] = "victim_db.dhc";
  rec.artifacts["victim_log"] = "victim_log.csv";
  save_record(ctx, rec);
}

void stage_attack(const StageContext& ctx) {
  Stopwatch clock;
  RunRecord rec = open_record(ctx);
  const LoadedModel victim = load_model(ctx.out / kVictimFile, "train-victim");
  const AttackConfig ac = build_attack_config(ctx.cfg);
  const AttackResult res = fit_attack(ctx.cfg, victim.model, build_surrogate(ctx.cfg));

  json meta = victim.metadata;
  meta["role"] = "backdoored";
  meta["attack_train"] = to_json(ac.train);
  meta["anchor"] = std::vector<double>(res.anchor.h_t.data(), res.anchor.h_t.data() + res.anchor.h_t.size());
  meta["shadow_target"] = res.anchor.target_class;
  meta["content_hash"] = rec.content_hash;
  save_checkpoint(ctx.out / kBackdoorFile, res.model, meta);
  write_attack_log(ctx.out / "attack_log.csv", res.log);

  json metrics = {{"shadow_target", res.anchor.target_class}, {"anchor_samples", res.anchor.sample_count}};
  if (!res.log.empty()) {
    const auto& last = res.log.back();
    metrics["final_loss"] = {
        {"total", last.total}, {"ben", last.benign}, {"bac", last.backdoor}, {"tpa", last.topology}};
  }
  rec.metrics["attack"] = metrics;
  rec.timings["attack"] = clock.seconds();
  rec.artifacts["backdoored_checkpoint"] = kBackdoorFile;
  rec.artifacts["attack_log"] = "attack_log.csv";
  save_record(ctx, rec);
}

json stage_evaluate(const StageContext& ctx, const std::string& which) {
  Stopwatch clock;
  RunRecord rec = open_record(ctx);
  std::string role = which;
  if (role == "auto") role = fs::exists(ctx.out / kBackdoorFile) ? "backdoored" : "victim";
  if (role != "victim" && role != "backdoored") {
    throw ConfigError("evaluate target must be auto, victim or backdoored");
  }
  const bool backdoored = role == "backdoored";
  const LoadedModel model =
      load_model(ctx.out / (backdoored ? kBackdoorFile : kVictimFile), backdoored ? "attack" : "train-victim");
  const DatasetBundle data = build_mainset(ctx.cfg);
  const TriggerSpec trigger = build_trigger(ctx.cfg);

  const EvalReport report = evaluate_model(ctx.cfg, model.model, data, backdoored ? &trigger : nullptr, ctx.use_kernel);
  json metrics = to_json(report);
  if (backdoored && fs::exists(ctx.out / kVictimFile)) {
    const LoadedModel victim = load_model(ctx.out / kVictimFile, "train-victim");
    const EvalReport base = evaluate_model(ctx.cfg, victim.model, data, &trigger, ctx.use_kernel);
    metrics["victim_map"] = base.map;
    metrics["triggered_baseline_t_map"] = *base.t_map;
    metrics["triggered_baseline_target"] = *base.identified_target;
  }

  const std::string stem = "eval_" + role;
  write_json(ctx.out / (stem + ".json"), metrics);
  write_pr_csv(ctx.out / ("pr_" + role + ".csv"), report.pr_points);
  Series pr{role, {}, {}};
  for (const auto& p : report.pr_points) {
    pr.x.push_back(p.recall);
    pr.y.push_back(p.precision);
  }
  write_text(ctx.out / ("pr_" + role + ".svg"),
             line_plot_svg({"Precision-recall (" + role + ")", "recall", "precision", 0, 1, 0, 1, {}}, {pr}));

  rec.metrics["evaluate:" + role] = metrics;
  rec.timings["evaluate:" + role] = clock.seconds();
  rec.artifacts[stem] = stem + ".json";
  rec.artifacts["pr_csv_" + role] = "pr_" + role + ".csv";
  rec.artifacts["pr_plot_" + role] = "pr_" + role + ".svg";
  save_record(ctx, rec);
  return metrics;
}

void stage_defend(const StageContext& ctx) {
  Stopwatch clock;
  RunRecord rec = open_record(ctx);
  const LoadedModel bd = load_model(ctx.out / kBackdoorFile, "attack");
  const DatasetBundle data = build_mainset(ctx.cfg);
  const TriggerSpec trigger = build_trigger(ctx.cfg);
  const auto& def = ctx.cfg.defense;

  const EvalReport before = evaluate_model(ctx.cfg, bd.model, data, &trigger);
  const std::size_t target = *before.identified_target;
  const auto triggered = apply_trigger_all(data.query, trigger, stage_seed(ctx.cfg, "eval"));
  auto score = [&](const HashModel& m) {
    const CodeDatabase db = encode_database(m, data.database);
    return std::pair{map_score(m, data.query, db), t_map_score(m, triggered, db, target)};
  };

  json out;
  out["target"] = target;
  out["before"] = {{"map", before.map}, {"t_map", *before.t_map}};

  // Fine-tuning on the clean training split.
  TrainConfig ft = def.finetune;
  ft.seed = stage_seed(ctx.cfg, "defense");
  const VictimMethod method = parse_victim_method(bd.metadata.value("method", "central"));
  const HashModel tuned = defend_finetune(bd.model, method, data.train, data.class_count, ft);
  const auto [ft_map, ft_tmap] = score(tuned);
  out["finetune"] = {{"map", ft_map}, {"t_map", ft_tmap}, {"train", to_json(ft)}};

  std::vector<PruneSweepRow> sweep;
  for (double rate : def.prune_rates) {
    const auto [m, t] = score(defend_prune(bd.model, rate));
    sweep.push_back({rate, m, t});
  }
  out["prune"] = to_json(sweep);
  write_prune_csv(ctx.out / "prune_sweep.csv", sweep);
  Series pm{"mAP", {}, {}}, pt{"t-mAP", {}, {}};
  for (const auto& r : sweep) {
    pm.x.push_back(r.rate);
    pm.y.push_back(r.map);
    pt.x.push_back(r.rate);
    pt.y.push_back(r.t_map);
  }
  write_text(ctx.out / "prune_sweep.svg",
             line_plot_svg({"Pruning sweep", "pruning rate", "score", 0, 0, 0, 1, {}}, {pm, pt}));

  const std::size_t n = std::min<std::size_t>(data.query.size(), static_cast<std::size_t>(def.strip_inputs));
  const CodeDatabase db = encode_database(bd.model, data.database);
  const StripReport strip =
      defend_strip(bd.model, std::span(data.query).first(n), std::span(triggered).first(n), data.train,
                   def.strip_overlays, db, stage_seed(ctx.cfg, "strip"));
  out["strip"] = to_json(strip);
  write_entropy_csv(ctx.out / "strip_entropy.csv", strip);
  write_text(ctx.out / "strip_entropy.svg",
             histogram_svg({"STRIP entropy", "entropy (nats)", "fraction", 0, 0, 0, 0, {}},
                           {{"clean", {}, strip.clean_entropy}, {"triggered", {}, strip.triggered_entropy}}, 20));

  write_json(ctx.out / "defense.json", out);
  rec.metrics["defend"] = out;
  rec.timings["defend"] = clock.seconds();
  rec.artifacts["defense_report"] = "defense.json";
  rec.artifacts["prune_csv"] = "prune_sweep.csv";
  rec.artifacts["prune_plot"] = "prune_sweep.svg";
  rec.artifacts["strip_csv"] = "strip_entropy.csv";
  rec.artifacts["strip_plot"] = "strip_entropy.svg";
  save_record(ctx, rec);
}

void stage_ablate(const StageContext& ctx, const std::string& knob, const std::vector<std::string>& values) {
  Stopwatch clock;
  RunRecord rec = open_record(ctx);
  std::optional<LoadedModel> victim;
  std::optional<DatasetBundle> data;
  if (knob != "seed" && fs::exists(ctx.out / kVictimFile)) {
    victim = load_model(ctx.out / kVictimFile, "train-victim");
    data = build_mainset(ctx.cfg);
  }
  const auto rows =
      ablate(ctx.cfg, knob, values, victim ? &victim->model : nullptr, data ? &*data : nullptr);

  const std::string stem = "ablate_" + knob;
  write_ablation_csv(ctx.out / (stem + ".csv"), rows);
  Series m{"mAP", {}, {}}, t{"t-mAP", {}, {}};
  std::vector<std::string> ticks;
  json j = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.x.push_back(static_cast<double>(i));
    m.y.push_back(rows[i].map);
    t.x.push_back(static_cast<double>(i));
    t.y.push_back(rows[i].t_map);
    ticks.push_back(rows[i].value);
    json row = {{"value", rows[i].value}};
    if (rows[i].error.empty()) {
      row["map"] = rows[i].map;
      row["t_map"] = rows[i].t_map;
    } else {
      row["error"] = rows[i].error;
    }
    j.push_back(row);
  }
  write_text(ctx.out / (stem + ".svg"),
             line_plot_svg({"Ablation: " + knob, knob, "score", 0, 0, 0, 1, ticks}, {m, t}));

  rec.metrics["ablate:" + knob] = j;
  rec.timings["ablate:" + knob] = clock.seconds();
  rec.artifacts[stem + "_csv"] = stem + ".csv";
  rec.artifacts[stem + "_plot"] = stem + ".svg";
  save_record(ctx, rec);
}

RunRecord stage_report(const StageContext& ctx) {
  RunRecord rec = open_record(ctx);
  std::ostringstream md;
  md << "# Run report\n\n";
  md << "content hash: `" << rec.content_hash << "`\n\n";
  md << "| stage | seconds |\n|---|---|\n";
  for (const auto& [stage, secs] : rec.timings.items()) md << "| " << stage << " | " << secs.dump() << " |\n";
  md << "\n";
  if (rec.metrics.contains("evaluate:backdoored")) {
    const json& e = rec.metrics["evaluate:backdoored"];
    md << "## Attack\n\n";
    if (e.contains("victim_map")) md << "- victim mAP: " << e["victim_map"].dump() << "\n";
    md << "- backdoored mAP: " << e["map"].dump() << "\n";
    if (e.contains("t_map")) md << "- t-mAP: " << e["t_map"].dump() << "\n";
    if (e.contains("identified_target")) md << "- identified target: " << e["identified_target"].dump() << "\n";
    if (e.contains("triggered_baseline_t_map")) {
      md << "- triggered baseline t-mAP (clean victim): " << e["triggered_baseline_t_map"].dump() << "\n";
    }
    md << "\n";
  } else if (rec.metrics.contains("evaluate:victim")) {
    md << "## Victim\n\n- mAP: " << rec.metrics["evaluate:victim"]["map"].dump() << "\n\n";
  }
  if (rec.metrics.contains("defend")) {
    md << "## Defenses\n\n| setting | mAP | t-mAP |\n|---|---|---|\n";
    const json& d = rec.metrics["defend"];
    md << "| none | " << d["before"]["map"].dump() << " | " << d["before"]["t_map"].dump() << " |\n";
    md << "| fine-tune | " << d["finetune"]["map"].dump() << " | " << d["finetune"]["t_map"].dump() << " |\n";
    for (const auto& row : d["prune"]["sweep"]) {
      md << "| prune " << row["rate"].dump() << " | " << row["map"].dump() << " | " << row["t_map"].dump()
         << " |\n";
    }
    md << "\nSTRIP FAR: " << d["strip"]["far"].dump() << "\n\n";
  }
  for (const auto& [key, val] : rec.metrics.items()) {
    if (key.rfind("ablate:", 0) != 0) continue;
    md << "## " << key << "\n\n| value | mAP | t-mAP |\n|---|---|---|\n";
    for (const auto& row : val) {
      md << "| " << row["value"].get<std::string>() << " | " << (row.contains("map") ? row["map"].dump() : "failed")
         << " | " << (row.contains("t_map") ? row["t_map"].dump() : "failed") << " |\n";
    }
    md << "\n";
  }
  write_text(ctx.out / "report.md", md.str());
  rec.artifacts["report"] = "report.md";

  // Drop references to artifacts that no longer exist.
  for (auto it = rec.artifacts.begin(); it != rec.artifacts.end();) {
    if (!fs::exists(ctx.out / it.value().get<std::string>())) {
      spdlog::warn("artifact {} is missing; dropping it from the record", it.value().get<std::string>());
      it = rec.artifacts.erase(it);
    } else {
      ++it;
    }
  }
  save_record(ctx, rec);
  return rec;
}

}  // namespace darkhash
