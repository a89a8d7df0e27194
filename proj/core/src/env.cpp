#include "quadlearn/env.hpp"

#include <algorithm>
#include <cmath>

#include "quadlearn/errors.hpp"

namespace quadlearn {

int EnvConfig::substeps() const {
  return std::max(1, static_cast<int>(std::lround(control_dt() / sim_dt)));
}

int EnvConfig::episode_steps() const {
  return std::max(1, static_cast<int>(std::lround(task.episode_seconds * control_frequency)));
}

void EnvConfig::validate() const {
  task.validate();
  model.validate();
  contact.validate();
  cpg.validate();
  jtp.validate(model);
  if (!(sim_dt > 0) || !(control_frequency > 0)) throw ConfigError("env: rates must be positive");
  if (control_dt() < sim_dt) throw ConfigError("env: control period shorter than the physics step");
  if (delay_min < 0 || delay_max < delay_min) throw ConfigError("env: invalid delay range");
  if (reset_noise < 0) throw ConfigError("env: reset noise must be nonnegative");
  if (fall.max_angle <= 0 || fall.min_height < 0) throw ConfigError("env: invalid fall thresholds");
}

LocomotionEnv::LocomotionEnv(EnvConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
  if (cfg_.jtp.nominal_q.isZero(0.0)) cfg_.jtp.nominal_q = cfg_.model.nominal_q();
  cfg_.validate();
  filter_ = control::JointFilter(cfg_.jtp.filter);
  imu_ = estimation::ImuModel(cfg_.imu);
  estimator_ = estimation::VelocityEstimator(cfg_.estimator);
  curriculum_ = tasks::Curriculum(cfg_.task.curriculum_bins_per_half);
}

Eigen::VectorXd LocomotionEnv::reset() {
  state_ = sim::standing_state(cfg_.model, cfg_.contact);
  std::uniform_real_distribution<double> noise(-cfg_.reset_noise, cfg_.reset_noise);
  for (int j = 0; j < sim::kJoints; ++j) state_.q[j] += noise(rng_);
  state_.q = sim::clamp_to_limits(state_.q, cfg_.model);
  std::uniform_int_distribution<int> delay(cfg_.delay_min, cfg_.delay_max);
  delay_ = delay(rng_);
  target_ = tasks::sample_target(cfg_.task, rng_, cfg_.task.curriculum ? &curriculum_ : nullptr);
  filter_.reset();
  phase_ = control::CpgPhase{};
  imu_.reset(state_);
  estimator_.reset();
  last_imu_ = {};
  prev_action_.setZero();
  episode_step_ = 0;
  return observe();
}

Eigen::VectorXd LocomotionEnv::observe() const {
  tasks::ObservationInputs in;
  in.q = state_.q;
  in.qd = state_.qd;
  in.prev_action = prev_action_;
  in.linear_acceleration = last_imu_.linear_acceleration;
  in.angular_acceleration = last_imu_.angular_acceleration;
  in.linear_velocity =
      cfg_.task.use_estimated_velocity ? estimator_.fused() : sim::body_linear_velocity(state_);
  in.angular_velocity = sim::body_angular_velocity(state_);
  in.desired_velocity = target_.velocity;
  in.gravity = sim::gravity_in_body(state_);
  if (cfg_.control == control::ControlArch::kCpg) in.phase = phase_;
  return tasks::build_observation(in, cfg_.control);
}

StepResult LocomotionEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != sim::kJoints) throw ConfigError("env step: expected 12 action components");
  StepResult out;
  const sim::Vec12 a = action.cwiseMax(-1.0).cwiseMin(1.0);
  const double dt = cfg_.control_dt();

  // For CPG the delay line carries the Cartesian offsets; the spline itself
  // is evaluated every substep so foot trajectories stay smooth.
  const bool cpg = cfg_.control == control::ControlArch::kCpg;
  const sim::Vec12 issued =
      cpg ? sim::Vec12(a.cwiseProduct(cfg_.cpg.offset_box()))
          : filter_.apply(control::jtp_targets(a, cfg_.jtp, cfg_.model), dt);
  const sim::Vec12 delayed = sim::delay_action(state_, issued, delay_);

  double energy = 0.0;
  const int n = cfg_.substeps();
  try {
    for (int k = 0; k < n; ++k) {
      sim::Vec12 command = delayed;
      if (cpg) {
        const auto t = control::cpg_targets(delayed, phase_, cfg_.cpg, cfg_.model);
        command = t.q_target;
        out.info.reachable = out.info.reachable && t.reachable;
        phase_ = control::cpg_advance(phase_, cfg_.sim_dt, cfg_.cpg);
      }
      state_ = sim::physics_step(state_, command, cfg_.model, cfg_.contact, cfg_.sim_dt);
      energy += state_.torque.squaredNorm();
      if (contacts_) contacts_->emplace_back(state_.time, state_.foot_contact);
    }
  } catch (const SimulationFault&) {
    out.info.fault = true;
  }

  ++episode_step_;
  prev_action_ = a;
  out.info.action = a;
  if (out.info.fault) {
    // Keep the last finite observation; the episode ends as a fall.
    out.fallen = true;
    out.obs = observe();
    return out;
  }

  last_imu_ = imu_.sample(state_, dt, rng_);
  estimator_.update(last_imu_, state_.q, state_.qd, cfg_.model, dt, rng_);

  const sim::Vec3 v_true = sim::body_linear_velocity(state_);
  const sim::Vec3 v = cfg_.task.use_estimated_velocity ? estimator_.fused() : v_true;
  const sim::Euler e = sim::roll_pitch_yaw(state_.orientation);
  const double yaw_rate = sim::body_angular_velocity(state_).z();
  out.info.velocity_true = v_true;
  out.info.velocity_estimated = estimator_.fused();
  out.info.velocity_accel_only = estimator_.accel_only();
  out.info.penalties = tasks::penalties(yaw_rate, e.pitch, e.roll, sim::Vec12::Zero());
  out.info.penalties.energy = energy / n;
  out.info.tracking = tasks::tracking_term(cfg_.task.variant, v.head<2>(), target_.velocity);
  out.reward = tasks::total_reward(cfg_.task.variant, out.info.tracking, out.info.penalties, cfg_.weights);

  out.fallen = sim::is_fallen(state_, cfg_.fall);
  out.truncated = !out.fallen && episode_step_ >= cfg_.episode_steps();
  out.obs = observe();
  return out;
}

}  // namespace quadlearn
