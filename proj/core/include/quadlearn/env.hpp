#pragma once

// Gym-style locomotion environment: policy action -> control pipeline ->
// delayed PD-tracked physics -> IMU / estimator -> reward and termination.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "quadlearn/control.hpp"
#include "quadlearn/estimation.hpp"
#include "quadlearn/sim.hpp"
#include "quadlearn/tasks.hpp"

namespace quadlearn {

struct EnvConfig {
  tasks::TaskSpec task;
  tasks::RewardWeights weights;
  control::ControlArch control = control::ControlArch::kJtp;
  control::JtpConfig jtp;  // nominal_q is filled from the model when left at zero
  control::CpgConfig cpg;
  sim::RobotModel model;
  sim::ContactParams contact;
  sim::FallThresholds fall;
  double sim_dt = 0.0025;
  double control_frequency = 40.0;
  int delay_min = 0;
  int delay_max = 2;
  double reset_noise = 0.05;
  estimation::ImuConfig imu;
  estimation::EstimatorConfig estimator;

  double control_dt() const { return 1.0 / control_frequency; }
  int substeps() const;
  int episode_steps() const;
  void validate() const;
};

struct StepInfo {
  tasks::Penalties penalties;
  double tracking = 0.0;
  sim::Vec3 velocity_true = sim::Vec3::Zero();  // trunk frame
  sim::Vec3 velocity_estimated = sim::Vec3::Zero();
  sim::Vec3 velocity_accel_only = sim::Vec3::Zero();
  sim::Vec12 action = sim::Vec12::Zero();  // clipped policy action
  bool reachable = true;
  bool fault = false;
};

struct StepResult {
  Eigen::VectorXd obs;
  double reward = 0.0;
  bool fallen = false;     // terminal
  bool truncated = false;  // time limit
  StepInfo info;
};

class LocomotionEnv {
 public:
  LocomotionEnv() = default;
  LocomotionEnv(EnvConfig cfg, std::uint64_t seed);

  Eigen::VectorXd reset();
  /// Action components are clipped to [-1, 1].
  StepResult step(const Eigen::VectorXd& action);

  int obs_dim() const { return tasks::observation_dim(cfg_.control); }
  int act_dim() const { return sim::kJoints; }
  const EnvConfig& config() const { return cfg_; }
  const sim::SimState& state() const { return state_; }
  const tasks::Vec2& target() const { return target_.velocity; }
  int target_bin() const { return target_.bin; }
  int delay_steps() const { return delay_; }
  int episode_step() const { return episode_step_; }
  const control::CpgPhase& phase() const { return phase_; }
  const estimation::VelocityEstimator& estimator() const { return estimator_; }

  tasks::Curriculum* curriculum() { return cfg_.task.curriculum ? &curriculum_ : nullptr; }

  /// When set, every physics substep appends (time, contact flags).
  void record_contacts(std::vector<std::pair<double, std::array<bool, sim::kLegs>>>* sink) {
    contacts_ = sink;
  }

  template <class Archive>
  void serialize(Archive& ar);

 private:
  Eigen::VectorXd observe() const;

  EnvConfig cfg_;
  std::mt19937_64 rng_;
  sim::SimState state_;
  control::JointFilter filter_;
  control::CpgPhase phase_;
  estimation::ImuModel imu_;
  estimation::VelocityEstimator estimator_;
  estimation::ImuSample last_imu_;
  tasks::Curriculum curriculum_;
  tasks::TargetSample target_;
  sim::Vec12 prev_action_ = sim::Vec12::Zero();
  int delay_ = 0;
  int episode_step_ = 0;
  std::vector<std::pair<double, std::array<bool, sim::kLegs>>>* contacts_ = nullptr;
};

}  // namespace quadlearn
