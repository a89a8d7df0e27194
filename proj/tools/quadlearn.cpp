// quadlearn command line: train, eval, ablate, plot-data.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quadlearn/config.hpp"
#include "quadlearn/errors.hpp"
#include "quadlearn/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace quadlearn;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string task, control, algo, out;
  std::optional<std::int64_t> steps;
  std::optional<int> utd;
  std::vector<std::string> set;  // key=value, value parsed as JSON when possible

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--task", task, "fixed_forward | max_forward | omni");
    app->add_option("--control", control, "jtp | cpg");
    app->add_option("--algo", algo, "sac | crossq | redq | droq");
    app->add_option("--utd", utd, "update-to-data ratio (sac: 1 or 20)");
    app->add_option("--out", out, "output directory");
    app->add_option("--steps", steps, "environment steps");
    app->add_option("--set", set, "extra key=value overrides (flat keys)");
  }

  json overrides() const {
    json o = json::object();
    if (seed) o["seed"] = *seed;
    if (!task.empty()) o["task.variant"] = task;
    if (!control.empty()) o["control.arch"] = control;
    if (!algo.empty()) o["algo.name"] = algo;
    if (utd) o["algo.utd"] = *utd;
    if (!out.empty()) o["out_dir"] = out;
    if (steps) o["total_steps"] = *steps;
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      o[key] = json::accept(value) ? json::parse(value) : json(value);
    }
    return o;
  }

  RunConfig resolve() const {
    return config.empty() ? config_from_flat(overrides()) : load_config(config, overrides());
  }
};

int cmd_train(const CommonFlags& f, const std::string& resume, bool verbose) {
  const RunConfig cfg = f.resolve();
  TrainOptions opts;
  opts.quiet = !verbose;
  if (!resume.empty()) opts.resume = resume;
  std::cerr << "training " << rl::to_string(cfg.algo.name) << " / " << control::to_string(cfg.env.control)
            << " / " << tasks::to_string(cfg.env.task.variant) << " for " << cfg.total_steps << " steps -> "
            << cfg.out_dir << "\n";
  const TrainResult r = train(cfg, opts);
  if (r.aborted) {
    std::cerr << "run aborted at step " << r.env_steps << ": " << r.message << "\n";
    return 1;
  }
  std::cout << json{{"env_steps", r.env_steps},
                    {"episodes", r.records.size()},
                    {"falls", r.falls},
                    {"critic_updates", r.critic_updates},
                    {"final_return", final_return(r.records)},
                    {"checkpoint", r.checkpoint.string()}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, int episodes, bool footsteps) {
  const CheckpointHeader header = read_checkpoint_header(checkpoint);
  // a config given on the command line has to describe the same run
  const bool explicit_cfg = !f.config.empty() || !f.overrides().empty();
  std::optional<RunConfig> expected;
  if (explicit_cfg) {
    json o = f.overrides();
    RunConfig c = f.config.empty() ? config_from_flat(o) : load_config(f.config, o);
    expected = c;
  }
  const Trainer t = Trainer::load(checkpoint, expected ? &*expected : nullptr);
  const EvalReport rep = evaluate(t, episodes);
  const fs::path out = f.out.empty() ? fs::path(checkpoint).parent_path() : fs::path(f.out);
  if (!out.empty()) fs::create_directories(out);
  {
    std::ofstream os(out / "eval.json");
    os << rep.to_json().dump(2) << "\n";
  }
  if (footsteps) write_footsteps_csv(out / "footsteps.csv", rep.footsteps);
  std::cout << rep.to_json().dump(2) << "\n";
  return 0;
}

int cmd_ablate(const CommonFlags& f, const std::string& preset, int seeds, std::uint64_t first_seed,
               bool verbose) {
  RunConfig base = f.resolve();
  const fs::path out = f.out.empty() ? fs::path("runs/ablate_" + preset) : fs::path(f.out);
  std::vector<std::uint64_t> s;
  for (int i = 0; i < seeds; ++i) s.push_back(first_seed + static_cast<std::uint64_t>(i));
  const auto rows = run_ablation(preset, base, s, out, verbose);
  std::ifstream in(out / (preset + ".csv"));
  std::cout << in.rdbuf();
  int failed = 0;
  for (const auto& r : rows) failed += r.failed;
  return failed > 0 ? 1 : 0;
}

int cmd_plot_data(const CommonFlags& f, const std::string& what, const std::string& checkpoint,
                  const EstimatorTraceOptions& est) {
  const fs::path out = f.out.empty() ? fs::path("runs/plot_data") : fs::path(f.out);
  fs::create_directories(out);
  if (what == "estimator") {
    const RunConfig cfg = f.resolve();
    const auto rows = estimator_trace(cfg.env, est);
    write_estimator_csv(out / "estimator_trace.csv", rows);
    std::cout << (out / "estimator_trace.csv").string() << "\n";
    return 0;
  }
  if (checkpoint.empty()) throw ConfigError("plot-data " + what + " needs --checkpoint");
  const Trainer t = Trainer::load(checkpoint);
  if (what == "footsteps") {
    const EvalReport rep = evaluate(t, 1);
    write_footsteps_csv(out / "footsteps.csv", rep.footsteps);
    std::cout << (out / "footsteps.csv").string() << "\n";
  } else if (what == "state") {
    write_state_trace_csv(out / "state_trace.csv", t.agent(), t.config(), t.config().seed + 1000003);
    std::cout << (out / "state_trace.csv").string() << "\n";
  } else {
    throw ConfigError("plot-data: unknown kind '" + what + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quadlearn: off-policy RL for simulated quadruped locomotion"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "progress on stderr");

  CommonFlags train_f, eval_f, ablate_f, plot_f;

  auto* train_cmd = app.add_subcommand("train", "train a policy");
  train_f.add_to(train_cmd);
  std::string resume;
  train_cmd->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "deterministic rollouts of a checkpoint");
  eval_f.add_to(eval_cmd);
  std::string eval_ckpt;
  int episodes = 5;
  bool footsteps = true;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--episodes", episodes, "number of episodes");
  eval_cmd->add_flag("!--no-footsteps", footsteps, "skip the footstep export");

  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation preset");
  ablate_f.add_to(ablate_cmd);
  std::string preset;
  int seeds = 3;
  std::uint64_t first_seed = 0;
  ablate_cmd->add_option("preset", preset, "algorithms | filters | rewards")
      ->required()
      ->check(CLI::IsMember({"algorithms", "filters", "rewards"}));
  ablate_cmd->add_option("--seeds", seeds, "seeds per configuration");
  ablate_cmd->add_option("--first-seed", first_seed, "first seed");

  auto* plot_cmd = app.add_subcommand("plot-data", "export figure data");
  plot_f.add_to(plot_cmd);
  std::string what;
  std::string plot_ckpt;
  EstimatorTraceOptions est;
  plot_cmd->add_option("kind", what, "estimator | footsteps | state")
      ->required()
      ->check(CLI::IsMember({"estimator", "footsteps", "state"}));
  plot_cmd->add_option("--checkpoint", plot_ckpt, "checkpoint (footsteps, state)");
  plot_cmd->add_option("--seconds", est.seconds, "estimator trace length");
  plot_cmd->add_option("--stride", est.stride, "scripted trot stride [m]");
  plot_cmd->add_option("--bias", est.accel_bias, "accelerometer x bias [m/s^2]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(train_f, resume, verbose);
    if (*eval_cmd) return cmd_eval(eval_f, eval_ckpt, episodes, footsteps);
    if (*ablate_cmd) return cmd_ablate(ablate_f, preset, seeds, first_seed, verbose);
    if (*plot_cmd) return cmd_plot_data(plot_f, what, plot_ckpt, est);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
