#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "darkhash/attack.hpp"
#include "darkhash/config.hpp"
#include "darkhash/datasets.hpp"
#include "darkhash/retrieval_eval.hpp"

namespace darkhash {

// ---- pipeline building blocks (pure functions of the config) ----

DatasetBundle build_mainset(const ExperimentConfig& cfg);
std::vector<LabeledImage> build_surrogate(const ExperimentConfig& cfg);
TriggerSpec build_trigger(const ExperimentConfig& cfg);
AttackConfig build_attack_config(const ExperimentConfig& cfg);
HashModel initial_model(const ExperimentConfig& cfg, std::size_t class_count);

// Trains the victim and rounds it through float32 so that the in-memory
// model and its checkpoint evaluate identically.
HashModel fit_victim(const ExperimentConfig& cfg, const DatasetBundle& data, EpochLog* log = nullptr);
AttackResult fit_attack(const ExperimentConfig& cfg, const HashModel& victim,
                        const std::vector<LabeledImage>& surrogate);

// Triggers each image; RAND placement draws from derive_seed(seed, i).
std::vector<LabeledImage> apply_trigger_all(std::span<const LabeledImage> images, const TriggerSpec& trigger,
                                            std::uint64_t seed);

// Benign metrics always; with a trigger also the identified target (from
// the first probe_queries triggered queries) and t-mAP over all triggered
// queries. With use_kernel the map/t-map numbers come from the external
// kernel.
EvalReport evaluate_model(const ExperimentConfig& cfg, const HashModel& model, const DatasetBundle& data,
                          const TriggerSpec* trigger, bool use_kernel = false);

// ---- ablation ----

const std::vector<std::string>& ablation_knobs();
ExperimentConfig with_knob(ExperimentConfig cfg, const std::string& knob, const std::string& value);

struct AblationRow {
  std::string value;
  double map = 0.0;
  double t_map = 0.0;
  std::string error;  // empty on success
};

// One attack+evaluation per value; everything but the knob stays fixed.
// `victim` and `data` may be supplied to skip retraining; the seed knob
// always retrains. A failing point is recorded and the sweep continues.
std::vector<AblationRow> ablate(const ExperimentConfig& cfg, const std::string& knob,
                                const std::vector<std::string>& values, const HashModel* victim = nullptr,
                                const DatasetBundle* data = nullptr);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

// ---- run directory and record ----

// SHA-1 over "blob <n>\0" + the canonical config (output_dir excluded) and
// every input file it references.
std::string content_hash(const ExperimentConfig& cfg);

struct RunRecord {
  nlohmann::json config = nlohmann::json::object();
  std::string content_hash;
  nlohmann::json metrics = nlohmann::json::object();    // stage -> metrics
  nlohmann::json timings = nlohmann::json::object();    // stage -> seconds
  nlohmann::json artifacts = nlohmann::json::object();  // name -> path relative to the run dir

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

struct StageContext {
  ExperimentConfig cfg;
  std::filesystem::path out;  // run directory
  bool use_kernel = false;
};

void stage_gen_data(const StageContext& ctx);
void stage_train_victim(const StageContext& ctx);
void stage_attack(const StageContext& ctx);
// which: "auto" (backdoored when present, else victim), "victim", "backdoored".
nlohmann::json stage_evaluate(const StageContext& ctx, const std::string& which = "auto");
void stage_defend(const StageContext& ctx);
void stage_ablate(const StageContext& ctx, const std::string& knob, const std::vector<std::string>& values);
RunRecord stage_report(const StageContext& ctx);

RunRecord load_record(const std::filesystem::path& out);

}  // namespace darkhash
