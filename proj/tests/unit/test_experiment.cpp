#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "darkhash/checkpoint.hpp"
#include "darkhash/code_file.hpp"
#include "darkhash/config.hpp"
#include "darkhash/errors.hpp"
#include "darkhash/experiment.hpp"
#include "darkhash/kernel.hpp"

using namespace darkhash;
namespace fs = std::filesystem;

namespace {

// A run small enough for unit tests: 3 classes of 8x8 images.
const char* kTinyConfig = R"(
seed = 3
output_dir = "unused"

[dataset]
classes = 3
per_class = 20
image_size = 8

[surrogate]
count = 40
classes = 4

[victim]
conv_channels = [4]
hidden = 8
epochs = 3
batch_size = 16

[trigger]
size = 2

[attack]
target_class = 1
batch_size = 8
epochs = 2

[eval]
probe_queries = 3

[defense]
prune_rates = [0.0, 0.5]
strip_inputs = 4
strip_overlays = 8

[defense.finetune]
epochs = 1
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("darkhash-exp-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny() { return parse_config(kTinyConfig); }

// Restores an environment variable on scope exit.
class EnvGuard {
 public:
  explicit EnvGuard(const char* name) : name_(name) {
    if (const char* v = std::getenv(name)) saved_ = v;
  }
  ~EnvGuard() {
    if (saved_) {
      ::setenv(name_, saved_->c_str(), 1);
    } else {
      ::unsetenv(name_);
    }
  }

 private:
  const char* name_;
  std::optional<std::string> saved_;
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + DARKHASH_CLI_PATH + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const ExperimentConfig d = parse_config("");
  CHECK(d.seed == 7);
  CHECK(d.attack.lambda == 15.0);
  CHECK(d.attack.effective_learning_rate() == doctest::Approx(5e-4));
  CHECK(d.surrogate.classes == 50);
  CHECK(d.victim.arch.bits == 16);

  const ExperimentConfig t = tiny();
  CHECK(t.seed == 3);
  CHECK(t.dataset.classes == 3);
  CHECK(t.victim.arch.conv_channels == std::vector<int>{4});
  CHECK(t.defense.finetune.epochs == 1);
  CHECK(t.defense.prune_rates == std::vector<double>{0.0, 0.5});
}

TEST_CASE("shipped configs load") {
  const fs::path root = DARKHASH_SOURCE_DIR;
  CHECK(load_config(root / "configs/pilot.toml").surrogate.kind == "held_out");
  CHECK(load_config(root / "configs/gaussian.toml").surrogate.kind == "gaussian");
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("[attack]\nlambdaa = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[attack]\nlambda = \"big\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[victim]\nbits = 24\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[attack]\npoisoning_rate = 1.0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[defense]\nprune_rates = [0.5, 0.3]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[defense]\nstrip_overlays = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[dataset]\nsource = \"folder\"\nroot = \"/does/not/exist\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[trigger]\nlocation = \"middle\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("this is not toml"), ConfigError);
  CHECK_THROWS_AS(load_config("/does/not/exist.toml"), ConfigError);
}

TEST_CASE("stage seeds are distinct and stable") {
  const ExperimentConfig c = tiny();
  CHECK(stage_seed(c, "data") == stage_seed(c, "data"));
  CHECK(stage_seed(c, "data") != stage_seed(c, "attack"));
  ExperimentConfig other = c;
  other.seed = 4;
  CHECK(stage_seed(other, "data") != stage_seed(c, "data"));
}

TEST_CASE("with_knob changes exactly one setting") {
  const ExperimentConfig c = tiny();
  CHECK(with_knob(c, "lambda", "0").attack.lambda == 0.0);
  CHECK(with_knob(c, "poisoning_rate", "0.3").attack.poisoning_rate == 0.3);
  CHECK(with_knob(c, "module_mask", "BC").attack.modules == "BC");
  CHECK(with_knob(c, "freeze_depth", "1").attack.freeze == "first_n");
  CHECK(with_knob(c, "location", "RAND").trigger.location == "RAND");
  CHECK(with_knob(c, "seed", "11").seed == 11);
  auto changed = with_knob(c, "lambda", "2").to_json();
  auto base = c.to_json();
  changed["attack"].erase("lambda");
  base["attack"].erase("lambda");
  CHECK(changed == base);
  CHECK_THROWS_AS(with_knob(c, "colour", "1"), ConfigError);
  CHECK_THROWS_AS(with_knob(c, "lambda", "abc"), ConfigError);
  CHECK_THROWS_AS(with_knob(c, "poisoning_rate", "2"), ConfigError);
}

TEST_CASE("content hash ignores the output directory only") {
  ExperimentConfig a = tiny();
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  CHECK(content_hash(a) == content_hash(b));
  CHECK(content_hash(a).size() == 40);
  b.attack.lambda = 1.0;
  CHECK(content_hash(a) != content_hash(b));
}

TEST_CASE("a one-value ablation equals a plain attack run") {
  const ExperimentConfig c = tiny();
  const DatasetBundle data = build_mainset(c);
  const HashModel victim = fit_victim(c, data);
  const auto rows = ablate(c, "lambda", {"15"}, &victim, &data);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].error.empty());
  const AttackResult res = fit_attack(c, victim, build_surrogate(c));
  const TriggerSpec trig = build_trigger(c);
  const EvalReport rep = evaluate_model(c, res.model, data, &trig);
  CHECK(rows[0].map == rep.map);
  CHECK(rows[0].t_map == *rep.t_map);
}

TEST_CASE("a failing ablation point is recorded and the sweep continues") {
  const ExperimentConfig c = tiny();
  const auto rows = ablate(c, "poisoning_rate", {"1.5", "0.25"});
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].error.empty());
  CHECK(std::isnan(rows[0].t_map));
  CHECK(rows[1].error.empty());
  CHECK_THROWS_AS(ablate(c, "colour", {"1"}), ConfigError);
}

TEST_CASE("pipeline building blocks are deterministic") {
  const ExperimentConfig c = tiny();
  const DatasetBundle data = build_mainset(c);
  CHECK(fit_victim(c, data).flat_parameters() == fit_victim(c, data).flat_parameters());
  const TriggerSpec trig = build_trigger(c);
  CHECK(trig.size == 2);
  const HashModel v = fit_victim(c, data);
  const EvalReport a = evaluate_model(c, v, data, &trig);
  const EvalReport b = evaluate_model(c, v, data, &trig);
  CHECK(a.map == b.map);
  CHECK(*a.t_map == *b.t_map);
  CHECK(a.precision_at.size() == 3);
}

TEST_CASE("kernel evaluation") {
  EnvGuard env("DARKHASH_KERNEL");
  const ExperimentConfig c = tiny();
  const DatasetBundle data = build_mainset(c);
  const HashModel v = fit_victim(c, data);

  SUBCASE("an absent kernel is an error, never a silent fallback") {
    ::setenv("DARKHASH_KERNEL", "/does/not/exist/hamming-kernel", 1);
    CHECK_FALSE(find_kernel().has_value());
    CHECK_THROWS_AS(evaluate_model(c, v, data, nullptr, true), KernelError);
  }

  SUBCASE("a kernel executable receives DHC1 files and its number is used") {
    const fs::path dir = scratch("kernel");
    const fs::path exe = write_file(dir / "fake-kernel",
                                    "#!/bin/sh\n"
                                    "# map --queries Q --db D\n"
                                    "head -c 4 \"$3\" | grep -q DHC1 || exit 3\n"
                                    "head -c 4 \"$5\" | grep -q DHC1 || exit 3\n"
                                    "echo 0.625\n");
    fs::permissions(exe, fs::perms::owner_all);
    ::setenv("DARKHASH_KERNEL", exe.c_str(), 1);
    REQUIRE(find_kernel().has_value());
    CHECK(evaluate_model(c, v, data, nullptr, true).map == 0.625);

    const fs::path bad = write_file(dir / "bad-kernel", "#!/bin/sh\necho not-a-number\n");
    fs::permissions(bad, fs::perms::owner_all);
    CodeDatabase db;
    db.push_back(HashCode({1, -1}), {1}, "a");
    CHECK_THROWS_AS(kernel_map(bad, db, db), KernelError);
    const fs::path failing = write_file(dir / "failing-kernel", "#!/bin/sh\nexit 2\n");
    fs::permissions(failing, fs::perms::owner_all);
    CHECK_THROWS_AS(kernel_map(failing, db, db), KernelError);
    fs::remove_all(dir);
  }
}

TEST_CASE("stages write their artifacts and the record tracks them") {
  const fs::path out = scratch("stages");
  StageContext ctx{tiny(), out, false};
  ctx.cfg.output_dir = out;
  CHECK_THROWS_AS(stage_attack(ctx), MissingArtifactError);
  stage_train_victim(ctx);
  CHECK(fs::exists(out / "victim.dhm"));
  CHECK(read_code_file(out / "victim_db.dhc").size() == 12);
  stage_attack(ctx);
  const Checkpoint ck = load_checkpoint(out / "backdoored.dhm");
  CHECK(ck.metadata["role"] == "backdoored");
  CHECK(ck.metadata["shadow_target"] == 1);
  const auto metrics = stage_evaluate(ctx);
  CHECK(metrics.contains("t_map"));
  CHECK(metrics.contains("triggered_baseline_t_map"));
  CHECK(fs::exists(out / "pr_backdoored.svg"));
  const auto victim_only = stage_evaluate(ctx, "victim");
  CHECK(victim_only.contains("map"));
  CHECK_FALSE(victim_only.contains("t_map"));
  const auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string first = read(out / "eval_backdoored.json");
  stage_evaluate(ctx, "backdoored");
  CHECK(read(out / "eval_backdoored.json") == first);
  stage_defend(ctx);
  CHECK(fs::exists(out / "prune_sweep.csv"));
  CHECK(fs::exists(out / "strip_entropy.csv"));
  stage_ablate(ctx, "lambda", {"0", "15"});
  CHECK(fs::exists(out / "ablate_lambda.csv"));
  fs::remove(out / "strip_entropy.svg");
  const RunRecord rec = stage_report(ctx);
  CHECK(fs::exists(out / "report.md"));
  CHECK_FALSE(rec.artifacts.contains("strip_plot"));
  CHECK(rec.content_hash == content_hash(ctx.cfg));
  CHECK(load_record(out).to_json() == rec.to_json());
  std::set<std::string> recorded;
  for (const auto& [name, rel] : rec.artifacts.items()) recorded.insert(rel.get<std::string>());
  for (const auto& entry : fs::directory_iterator(out)) {
    const std::string name = entry.path().filename().string();
    if (name != "run_record.json") CHECK_MESSAGE(recorded.count(name) == 1, name);
  }

  // Re-running a stage with the same config reproduces its outputs.
  const auto before = load_checkpoint(out / "backdoored.dhm").model.flat_parameters();
  stage_attack(ctx);
  CHECK(load_checkpoint(out / "backdoored.dhm").model.flat_parameters() == before);
  fs::remove_all(out);
}

TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch("cli");
  const fs::path cfg = write_file(dir / "tiny.toml", kTinyConfig);
  const fs::path bad = write_file(dir / "bad.toml", "[attack]\nlambda = -1\n");
  const std::string out = " --out '" + (dir / "run").string() + "'";

  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("train-victim --config '" + (dir / "missing.toml").string() + "'") == 2);
  CHECK(run_cli("train-victim --config '" + bad.string() + "'" + out) == 3);
  CHECK(run_cli("attack --config '" + cfg.string() + "'" + out) == 4);
  CHECK(run_cli("ablate --config '" + cfg.string() + "'" + out + " --knob colour --values 1") == 2);
  CHECK(run_cli("ablate --config '" + cfg.string() + "'" + out + " --knob lambda --values=-1") == 0);
  CHECK(run_cli("train-victim --config '" + cfg.string() + "'" + out) == 0);
  {
    EnvGuard env("DARKHASH_KERNEL");
    ::setenv("DARKHASH_KERNEL", "/does/not/exist", 1);
    CHECK(run_cli("evaluate --use-kernel --config '" + cfg.string() + "'" + out) == 8);
  }
  write_file(dir / "run" / "victim.dhm", "garbage");
  CHECK(run_cli("attack --config '" + cfg.string() + "'" + out) == 6);
  fs::remove_all(dir);
}
