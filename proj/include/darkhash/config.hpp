#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "darkhash/attack.hpp"
#include "darkhash/hashmodel.hpp"
#include "darkhash/victim.hpp"

namespace darkhash {

struct DatasetSection {
  std::string source = "synthetic";  // "synthetic" | "folder"
  int classes = 10;
  int per_class = 200;
  int image_size = 16;
  int channels = 3;
  double noise_std = 0.1;
  std::filesystem::path root;      // folder source only
  std::filesystem::path manifest;  // folder source only, relative to root when not absolute
};

struct SurrogateSection {
  std::string kind = "held_out";  // "held_out" | "gaussian"
  int count = 2000;
  int classes = 50;        // held-out classes, or Gaussian pseudo-classes
  double noise_std = 0.1;  // held_out
  double mu = 0.5;         // gaussian
  double sigma = 1.0;      // gaussian
};

struct VictimSection {
  VictimMethod method = VictimMethod::Central;
  Architecture arch;
  TrainConfig train{OptimizerKind::RmsProp, 1e-3, 64, 15, 0};
};

struct TriggerSection {
  int size = 0;  // 0 = scaled from the image side
  std::vector<double> color{1.0, 0.0, 1.0};
  std::filesystem::path pattern_png;  // overrides color when set
  std::string location = "LR";
  double transparency = 1.0;
};

struct AttackSection {
  double lambda = 15.0;
  double poisoning_rate = 0.1;
  std::size_t target_class = 0;
  std::string distance = "huber";  // "huber" | "squared"
  double huber_delta = 1.0;
  std::string freeze = "all_conv";  // "all_conv" | "none" | "first_n"
  int freeze_n = 0;
  std::string modules = "ABC";
  bool exclude_nearest = false;
  OptimizerKind optimizer = OptimizerKind::RmsProp;
  double learning_rate = 5e-6;
  double lr_multiplier = 100.0;  // desk-scale scaling for the toy backbone
  int batch_size = 64;
  int epochs = 100;

  double effective_learning_rate() const { return learning_rate * lr_multiplier; }
};

struct EvalSection {
  std::vector<std::size_t> topn{1, 10, 100};
  int probe_queries = 100;
};

struct DefenseSection {
  std::vector<double> prune_rates{0.0, 0.3, 0.5, 0.8};
  int strip_inputs = 100;
  int strip_overlays = 16;
  TrainConfig finetune{OptimizerKind::RmsProp, 1e-4, 64, 5, 0};
};

// One file fully determines a run; only the output directory may be
// overridden from the command line.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::filesystem::path output_dir = "runs/default";
  DatasetSection dataset;
  SurrogateSection surrogate;
  VictimSection victim;
  TriggerSection trigger;
  AttackSection attack;
  EvalSection eval;
  DefenseSection defense;

  void validate() const;
  nlohmann::json to_json() const;
};

ExperimentConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Deterministic root for a named stream: "data", "surrogate", "init",
// "victim", "attack", "eval", "defense".
std::uint64_t stage_seed(const ExperimentConfig& cfg, std::string_view stream);

OptimizerKind parse_optimizer(const std::string& name);  // "rmsprop" | "sgd"
std::string to_string(OptimizerKind kind);
FreezePolicy freeze_policy(const AttackSection& attack);

}  // namespace darkhash
