#pragma once

// Training loop, evaluation, checkpoints and experiment drivers.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quadlearn/config.hpp"
#include "quadlearn/env.hpp"
#include "quadlearn/rl.hpp"

namespace quadlearn {

inline constexpr int kMetricsSchema = 1;

struct MetricsRecord {
  std::int64_t step = 0;  // env steps when the episode ended
  std::int64_t episode = 0;
  double ret = 0.0;
  std::int64_t length = 0;
  bool fell = false;
  std::int64_t falls_cumulative = 0;
  double max_velocity_episode = 0.0;
  double tracking_error_abs = std::numeric_limits<double>::quiet_NaN();  // NaN for max_forward
  double action_rate_sq = 0.0;
  std::int64_t critic_updates = 0;
  double wall_time = 0.0;

  nlohmann::json to_json(bool with_wall_time = true) const;
  static MetricsRecord from_json(const nlohmann::json& j);
};

/// Mean over consecutive pairs of the squared action-difference norm.
/// Zero for fewer than two actions.
double action_rate_metric(const std::vector<sim::Vec12>& actions);

/// Per-episode running sums.
struct EpisodeStats {
  double ret = 0.0;
  std::int64_t length = 0;
  double max_velocity = -std::numeric_limits<double>::infinity();
  double tracking_error_sum = 0.0;
  double along_velocity_sum = 0.0;
  double action_rate_sum = 0.0;
  sim::Vec12 last_action = sim::Vec12::Zero();

  void add(const StepResult& r, const tasks::Vec2& target, tasks::TaskVariant variant);

  template <class Archive>
  void serialize(Archive& ar) {
    ar(ret, length, max_velocity, tracking_error_sum, along_velocity_sum, action_rate_sum, last_action);
  }
};

class Trainer {
 public:
  explicit Trainer(RunConfig cfg);

  /// Steps the environment until `until_step` env steps have been taken.
  /// `on_episode` fires after every finished episode. NumericError from a
  /// learner update propagates; the trainer state is left as before the step.
  void run(std::int64_t until_step, const std::function<void(const MetricsRecord&)>& on_episode = {});

  const RunConfig& config() const { return cfg_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t episodes() const { return episodes_; }
  std::int64_t falls() const { return falls_; }
  const rl::Agent<float>& agent() const { return agent_; }
  const rl::ReplayBuffer<float>& buffer() const { return buffer_; }
  const LocomotionEnv& env() const { return env_; }
  const std::vector<MetricsRecord>& records() const { return records_; }

  /// Binary checkpoint: magic, version, config digest, embedded config, state.
  void save(const std::filesystem::path& path) const;
  /// Restores a checkpoint. With `expected`, the stored digest must match
  /// config_digest(*expected) (ConfigError otherwise); the expected config's
  /// total_steps / out_dir / checkpoint_interval then replace the stored ones.
  static Trainer load(const std::filesystem::path& path, const RunConfig* expected = nullptr);

  template <class Archive>
  void serialize(Archive& ar);

 private:
  void finish_episode(bool fell, const std::function<void(const MetricsRecord&)>& cb);

  RunConfig cfg_;
  LocomotionEnv env_;
  rl::Agent<float> agent_;
  rl::ReplayBuffer<float> buffer_;
  nn::Rng rng_;
  Eigen::VectorXd obs_;
  EpisodeStats stats_;
  std::int64_t env_steps_ = 0;
  std::int64_t episodes_ = 0;
  std::int64_t falls_ = 0;
  double wall_before_ = 0.0;  // seconds spent before this process resumed
  std::chrono::steady_clock::time_point started_;
  std::vector<MetricsRecord> records_;
};

/// Reads only the header of a checkpoint.
struct CheckpointHeader {
  std::uint32_t version = 0;
  std::string digest;
  RunConfig config;
};
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  bool write_files = true;  // metrics.jsonl, checkpoint.bin, config.json under out_dir
  bool quiet = true;
};

struct TrainResult {
  std::vector<MetricsRecord> records;
  bool aborted = false;
  std::string message;
  std::int64_t env_steps = 0;
  std::int64_t critic_updates = 0;
  std::int64_t falls = 0;
  std::filesystem::path checkpoint;
};

/// Full run. A non-finite learner loss aborts the run (aborted = true) after
/// writing abort.json; simulation faults only end the episode as a fall.
TrainResult train(const RunConfig& cfg, const TrainOptions& opts = {});

// -- evaluation ----------------------------------------------------------------

using ContactTrace = std::vector<std::pair<double, std::array<bool, sim::kLegs>>>;

struct FootstepInterval {
  int episode = 0;
  int leg = 0;
  double start = 0.0;
  double end = 0.0;
};

/// Contact intervals (in contact) of one episode's substep trace.
std::vector<FootstepInterval> contact_intervals(const ContactTrace& trace, int episode = 0);

/// Dominant period of a signal from its autocorrelation, as a frequency in
/// Hz. Looks for the highest autocorrelation peak past the first zero
/// crossing with lag up to 1 / min_frequency. NaN if there is none.
double dominant_frequency(const std::vector<double>& signal, double dt, double min_frequency = 0.3);

struct EvalReport {
  int episodes = 0;
  double mean_return = 0.0;
  double mean_max_velocity = 0.0;
  double peak_velocity = 0.0;
  double mean_tracking_error = std::numeric_limits<double>::quiet_NaN();
  int falls = 0;
  std::array<double, sim::kLegs> contact_frequency{};  // per leg, NaN if aperiodic
  double dominant_contact_frequency = std::numeric_limits<double>::quiet_NaN();
  std::vector<FootstepInterval> footsteps;

  nlohmann::json to_json() const;
};

/// Deterministic-policy rollouts on an environment seeded from `seed`.
EvalReport evaluate(const rl::Agent<float>& agent, const RunConfig& cfg, int episodes, std::uint64_t seed);
EvalReport evaluate(const Trainer& trainer, int episodes);

void write_footsteps_csv(const std::filesystem::path& path, const std::vector<FootstepInterval>& steps);

// -- figure data -------------------------------------------------------------

struct EstimatorSample {
  double t = 0.0;
  double v_true = 0.0;
  double v_accel_only = 0.0;
  double v_fused = 0.0;
};

struct EstimatorTraceOptions {
  double seconds = 20.0;
  double stride = 0.02;  // scripted CPG stride half-amplitude [m]
  double accel_bias = 0.05;
  double odometry_noise_std = 0.02;
  std::uint64_t seed = 7;
};

/// Scripted CPG trot with the estimator in the loop (x components, trunk frame).
std::vector<EstimatorSample> estimator_trace(const EnvConfig& base, const EstimatorTraceOptions& opts);

void write_estimator_csv(const std::filesystem::path& path, const std::vector<EstimatorSample>& rows);

/// One deterministic episode: t, position, roll/pitch/yaw, trunk-frame velocity, q.
void write_state_trace_csv(const std::filesystem::path& path, const rl::Agent<float>& agent, const RunConfig& cfg,
                           std::uint64_t seed);

// -- ablations ---------------------------------------------------------------

struct AblationEntry {
  std::string name;
  RunConfig config;
};

/// "algorithms", "filters" or "rewards". ConfigError otherwise.
std::vector<AblationEntry> ablation_grid(const std::string& preset, const RunConfig& base);

struct AblationRow {
  std::string name;
  int runs = 0;
  int failed = 0;
  double return_median = 0.0, return_iqr = 0.0;
  double falls_median = 0.0, falls_iqr = 0.0;
  double action_rate_median = 0.0, action_rate_iqr = 0.0;
};

/// Mean return of the last `n` episodes (all of them if fewer).
double final_return(const std::vector<MetricsRecord>& records, std::size_t n = 10);
double median(std::vector<double> v);
/// Q3 - Q1 with linear interpolation.
double iqr(std::vector<double> v);

std::vector<AblationRow> run_ablation(const std::string& preset, const RunConfig& base,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::filesystem::path& out_dir, bool verbose = false);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace quadlearn
