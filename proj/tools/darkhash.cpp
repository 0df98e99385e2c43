// Command-line front end. Every subcommand reads one TOML config and writes
// into the run directory (the config's output_dir, or --out).
//
// Exit status: 0 success, 2 usage error, 3 bad config, 4 missing artifact,
// 5 ingestion failure, 6 malformed file, 7 training divergence, 8 kernel
// unavailable, 9 invalid input, 1 anything else.
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "darkhash/config.hpp"
#include "darkhash/errors.hpp"
#include "darkhash/experiment.hpp"

namespace {

enum Exit : int {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,
  kConfig = 3,
  kMissingArtifact = 4,
  kIngestion = 5,
  kFormat = 6,
  kDivergence = 7,
  kKernel = 8,
  kInvalidInput = 9,
};

struct Common {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
  bool use_kernel = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment TOML file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "run directory (overrides output_dir)");
  cmd->add_option("--seed", c.seed, "root seed (overrides the config)")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--use-kernel", c.use_kernel, "evaluate through the external hamming-kernel");
}

darkhash::StageContext context(const Common& c) {
  darkhash::StageContext ctx;
  ctx.cfg = darkhash::load_config(c.config);
  if (c.seed >= 0) ctx.cfg.seed = static_cast<std::uint64_t>(c.seed);
  if (!c.out.empty()) ctx.cfg.output_dir = c.out;
  ctx.out = ctx.cfg.output_dir;
  ctx.use_kernel = c.use_kernel;
  std::filesystem::create_directories(ctx.out);
  return ctx;
}

std::vector<std::string> split_values(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DarkHash desk-scale experiment runner"};
  app.require_subcommand(1);
  Common common;
  std::string which = "auto";
  std::string knob;
  std::string values;

  auto* gen = app.add_subcommand("gen-data", "export the main and surrogate datasets");
  auto* train = app.add_subcommand("train-victim", "train the victim hashing model");
  auto* attack = app.add_subcommand("attack", "backdoor the victim with surrogate data");
  auto* evaluate = app.add_subcommand("evaluate", "retrieval metrics for the victim or backdoored model");
  auto* defend = app.add_subcommand("defend", "fine-tuning, pruning sweep and STRIP");
  auto* ablate = app.add_subcommand("ablate", "sweep one knob, writing knob_value,map,t_map");
  auto* report = app.add_subcommand("report", "summarise the run directory");
  for (auto* cmd : {gen, train, attack, evaluate, defend, ablate, report}) add_common(cmd, common);
  evaluate->add_option("--model", which, "auto, victim or backdoored")
      ->check(CLI::IsMember({"auto", "victim", "backdoored"}));
  ablate->add_option("--knob", knob, "knob to sweep")->required()->check(CLI::IsMember(darkhash::ablation_knobs()));
  ablate->add_option("--values", values, "comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const darkhash::StageContext ctx = context(common);
    if (*gen) {
      darkhash::stage_gen_data(ctx);
    } else if (*train) {
      darkhash::stage_train_victim(ctx);
    } else if (*attack) {
      darkhash::stage_attack(ctx);
    } else if (*evaluate) {
      std::cout << darkhash::stage_evaluate(ctx, which).dump(2) << "\n";
    } else if (*defend) {
      darkhash::stage_defend(ctx);
    } else if (*ablate) {
      darkhash::stage_ablate(ctx, knob, split_values(values));
    } else if (*report) {
      darkhash::stage_report(ctx);
      std::ifstream md(ctx.out / "report.md");
      std::cout << md.rdbuf();
    }
    return kOk;
  } catch (const darkhash::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const darkhash::MissingArtifactError& e) {
    spdlog::error("{}", e.what());
    return kMissingArtifact;
  } catch (const darkhash::IngestionError& e) {
    spdlog::error("ingestion error: {}", e.what());
    return kIngestion;
  } catch (const darkhash::FormatError& e) {
    spdlog::error("format error: {}", e.what());
    return kFormat;
  } catch (const darkhash::DivergenceError& e) {
    spdlog::error("training diverged: {}", e.what());
    return kDivergence;
  } catch (const darkhash::KernelError& e) {
    spdlog::error("kernel error: {}", e.what());
    return kKernel;
  } catch (const darkhash::InvalidInputError& e) {
    spdlog::error("invalid input: {}", e.what());
    return kInvalidInput;
  } catch (const darkhash::DimensionError& e) {
    spdlog::error("invalid input: {}", e.what());
    return kInvalidInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kUnexpected;
  }
}
