#include "quadlearn/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "quadlearn/errors.hpp"

namespace quadlearn::tasks {

std::string to_string(TaskVariant v) {
  switch (v) {
    case TaskVariant::kFixedForward: return "fixed_forward";
    case TaskVariant::kMaxForward: return "max_forward";
    case TaskVariant::kOmni: return "omni";
  }
  return "unknown";
}

TaskVariant parse_task(std::string_view name) {
  if (name == "fixed_forward") return TaskVariant::kFixedForward;
  if (name == "max_forward") return TaskVariant::kMaxForward;
  if (name == "omni") return TaskVariant::kOmni;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  if (target_speed <= 0) throw ConfigError("task: target speed must be positive");
  if (omni_range <= 0) throw ConfigError("task: omni range must be positive");
  if (episode_seconds <= 0) throw ConfigError("task: episode length must be positive");
  if (curriculum_bins_per_half < 1) throw ConfigError("task: curriculum needs at least one bin per half");
}

double reward_track_x(double v, double target) {
  if (!(target > 0.0)) throw ConfigError("reward_track_x: target velocity must be positive");
  if (v >= target && v <= 2.0 * target) return 1.0;
  if (v <= -target || v >= 4.0 * target) return 0.0;
  return 1.0 - std::abs(v - target) / (2.0 * target);
}

double reward_max_x(double v_x, double v_y) { return v_x - std::abs(v_y); }

double reward_track_xy(const Vec2& v, const Vec2& target) {
  const double speed = target.norm();
  if (!(speed > 0.0)) throw ConfigError("reward_track_xy: target velocity must be nonzero");
  const Vec2 along = target / speed;
  const Vec2 across(-along.y(), along.x());
  return reward_track_x(v.dot(along), speed) - std::abs(v.dot(across));
}

Penalties penalties(double yaw_rate, double pitch, double roll, const Vec12& torque) {
  return {yaw_rate * yaw_rate, pitch * pitch + roll * roll, torque.squaredNorm()};
}

double total_reward(TaskVariant variant, double tracking, const Penalties& p, const RewardWeights& w) {
  double r = variant == TaskVariant::kMaxForward ? w.max_x_scale * tracking : tracking;
  if (w.use_penalties) r -= w.yaw * p.yaw + w.upright * p.upright + w.energy * p.energy;
  return w.floor_at_zero ? std::max(r, 0.0) : r;
}

double tracking_term(TaskVariant variant, const Vec2& v, const Vec2& target) {
  switch (variant) {
    case TaskVariant::kFixedForward: return reward_track_x(v.x(), target.x());
    case TaskVariant::kMaxForward: return reward_max_x(v.x(), v.y());
    case TaskVariant::kOmni: return reward_track_xy(v, target);
  }
  return 0.0;
}

int observation_dim(control::ControlArch arch) { return arch == control::ControlArch::kCpg ? 55 : 53; }

Eigen::VectorXd build_observation(const ObservationInputs& in, control::ControlArch arch) {
  const bool cpg = arch == control::ControlArch::kCpg;
  if (cpg != in.phase.has_value()) {
    throw ConfigError(cpg ? "CPG observation needs the phase variables"
                          : "JTP observation must not carry phase variables");
  }
  Eigen::VectorXd o(observation_dim(arch));
  o.head<53>() << in.q, in.qd, in.prev_action, in.linear_acceleration, in.angular_acceleration,
      in.linear_velocity, in.angular_velocity, in.desired_velocity, in.gravity;
  if (cpg) o.tail<2>() << in.phase->l1, in.phase->l2;
  return o;
}

Curriculum::Curriculum(int bins_per_half, double threshold)
    : learned_(2 * bins_per_half, false), unlocked_(2 * bins_per_half, false), threshold_(threshold) {
  if (bins_per_half < 1) throw ConfigError("curriculum: need at least one bin per half-circle");
  unlocked_[0] = true;
}

double Curriculum::bin_width() const { return 2.0 * std::numbers::pi / num_bins(); }

double Curriculum::bin_center(int bin) const {
  return std::remainder(std::numbers::pi + bin * bin_width(), 2.0 * std::numbers::pi);
}

int Curriculum::bin_of(double angle) const {
  const double w = bin_width();
  double rel = std::fmod(angle - std::numbers::pi + 0.5 * w, 2.0 * std::numbers::pi);
  if (rel < 0) rel += 2.0 * std::numbers::pi;
  return std::min(static_cast<int>(rel / w), num_bins() - 1);
}

std::vector<int> Curriculum::active_set() const {
  std::vector<int> out;
  for (int i = 0; i < num_bins(); ++i) {
    if (unlocked_[i]) out.push_back(i);
  }
  return out;
}

bool Curriculum::complete() const {
  return std::all_of(learned_.begin(), learned_.end(), [](bool b) { return b; });
}

Curriculum curriculum_update(const Curriculum& c, int bin, double ratio) {
  if (!std::isfinite(ratio) || ratio < 0.0) throw InputError("curriculum_update: ratio must be finite and >= 0");
  if (bin < 0 || bin >= c.num_bins() || !c.unlocked_[bin]) {
    throw InputError("curriculum_update: bin " + std::to_string(bin) + " is not unlocked");
  }
  Curriculum n = c;
  if (ratio >= c.threshold_) {
    const int k = c.num_bins();
    n.learned_[bin] = true;
    n.unlocked_[(bin + 1) % k] = true;
    n.unlocked_[(bin + k - 1) % k] = true;
  }
  return n;
}

double achieved_ratio(double mean_along_velocity, double target_speed) {
  if (!(target_speed > 0.0)) throw InputError("achieved_ratio: target speed must be positive");
  return std::max(mean_along_velocity, 0.0) / target_speed;
}

TargetSample sample_target(const TaskSpec& task, std::mt19937_64& rng, const Curriculum* curriculum) {
  TargetSample t;
  switch (task.variant) {
    case TaskVariant::kFixedForward:
      t.velocity = Vec2(task.target_speed, 0.0);
      break;
    case TaskVariant::kMaxForward:
      break;
    case TaskVariant::kOmni:
      if (curriculum) {
        const auto active = curriculum->active_set();
        std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
        t.bin = active[pick(rng)];
        const double w = curriculum->bin_width();
        std::uniform_real_distribution<double> offset(-0.5 * w, 0.5 * w);
        const double angle = curriculum->bin_center(t.bin) + offset(rng);
        t.velocity = task.target_speed * Vec2(std::cos(angle), std::sin(angle));
      } else {
        std::uniform_real_distribution<double> u(-task.omni_range, task.omni_range);
        do {
          const double x = u(rng);
          const double y = u(rng);
          t.velocity = Vec2(x, y);
        } while (t.velocity.isZero(0.0));
      }
      break;
  }
  return t;
}

}  // namespace quadlearn::tasks
