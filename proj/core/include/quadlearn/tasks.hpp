#pragma once

// Locomotion tasks: reward terms, observation layout, target sampling and
// the direction curriculum for omnidirectional tracking.

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "quadlearn/control.hpp"
#include "quadlearn/sim.hpp"

namespace quadlearn::tasks {

using sim::Vec12;
using sim::Vec3;
using Vec2 = Eigen::Vector2d;

enum class TaskVariant { kFixedForward, kMaxForward, kOmni };

std::string to_string(TaskVariant v);
/// "fixed_forward", "max_forward", "omni". Throws ConfigError otherwise.
TaskVariant parse_task(std::string_view name);

struct TaskSpec {
  TaskVariant variant = TaskVariant::kFixedForward;
  double target_speed = 0.5;     // fixed-forward target, curriculum speed
  double omni_range = 0.5;       // omni components ~ U(-range, range)
  double episode_seconds = 10.0;
  bool use_estimated_velocity = false;
  bool curriculum = false;
  int curriculum_bins_per_half = 8;
  void validate() const;
};

double reward_track_x(double v_x, double target);
double reward_max_x(double v_x, double v_y);
double reward_track_xy(const Vec2& v, const Vec2& target);

struct Penalties {
  double yaw = 0.0;
  double upright = 0.0;
  double energy = 0.0;
};

Penalties penalties(double yaw_rate, double pitch, double roll, const Vec12& torque);

struct RewardWeights {
  double yaw = 0.1;
  double upright = 10.0;
  double energy = 0.0003;
  double max_x_scale = 2.0;
  bool floor_at_zero = true;
  bool use_penalties = true;  // false: tracking term only
};

/// Scaled tracking term minus weighted penalties, floored at zero.
double total_reward(TaskVariant variant, double tracking, const Penalties& p, const RewardWeights& w);

/// The tracking term of a variant for a trunk-frame planar velocity.
double tracking_term(TaskVariant variant, const Vec2& v, const Vec2& target);

struct ObservationInputs {
  Vec12 q = Vec12::Zero();
  Vec12 qd = Vec12::Zero();
  Vec12 prev_action = Vec12::Zero();
  Vec3 linear_acceleration = Vec3::Zero();
  Vec3 angular_acceleration = Vec3::Zero();
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  Vec2 desired_velocity = Vec2::Zero();
  Vec3 gravity = Vec3(0, 0, -1);
  std::optional<control::CpgPhase> phase;
};

/// 53 for JTP, 55 for CPG (phase variables appended).
int observation_dim(control::ControlArch arch);

/// Throws ConfigError when a CPG run lacks the phase or a JTP run has one.
Eigen::VectorXd build_observation(const ObservationInputs& in, control::ControlArch arch);

// -- curriculum --------------------------------------------------------------

/// Bin 0 is centred on straight backwards; bins advance counter-clockwise,
/// so bin N (of 2N) points straight ahead.
class Curriculum {
 public:
  Curriculum() = default;
  explicit Curriculum(int bins_per_half, double threshold = 0.95);

  int num_bins() const { return static_cast<int>(learned_.size()); }
  double bin_width() const;
  double bin_center(int bin) const;
  /// Bin containing a heading angle (radians, 0 = forward).
  int bin_of(double angle) const;

  bool unlocked(int bin) const { return unlocked_.at(bin); }
  bool learned(int bin) const { return learned_.at(bin); }
  std::vector<int> active_set() const;
  bool complete() const;
  double threshold() const { return threshold_; }

  template <class Archive>
  void serialize(Archive& ar) {
    ar(learned_, unlocked_, threshold_);
  }

  friend Curriculum curriculum_update(const Curriculum& c, int bin, double achieved_ratio);

 private:
  std::vector<bool> learned_;
  std::vector<bool> unlocked_;
  double threshold_ = 0.95;
};

/// Marks `bin` learned when achieved_ratio >= threshold and unlocks its two
/// circular neighbours. InputError for a negative or non-finite ratio or a
/// locked bin.
Curriculum curriculum_update(const Curriculum& c, int bin, double achieved_ratio);

/// Episode-mean along-target velocity over the target speed.
double achieved_ratio(double mean_along_velocity, double target_speed);

struct TargetSample {
  Vec2 velocity = Vec2::Zero();
  int bin = -1;  // curriculum bin, -1 without curriculum
};

TargetSample sample_target(const TaskSpec& task, std::mt19937_64& rng,
                           const Curriculum* curriculum = nullptr);

}  // namespace quadlearn::tasks
