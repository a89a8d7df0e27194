#pragma once

// Trunk linear-velocity estimation: accelerometer integration corrected by
// leg odometry (all feet assumed fixed to the ground) in a 3-state Kalman
// filter.

#include <random>

#include "quadlearn/sim.hpp"

namespace quadlearn::estimation {

using sim::Mat3;
using sim::Vec3;

struct ImuSample {
  Vec3 linear_acceleration = Vec3::Zero();  // trunk frame, gravity removed
  Vec3 angular_velocity = Vec3::Zero();     // trunk frame
  Vec3 angular_acceleration = Vec3::Zero();
};

struct ImuConfig {
  Vec3 accel_bias = Vec3::Zero();
  double accel_noise_std = 0.0;
  double gyro_noise_std = 0.0;
};

/// Synthesizes IMU readings by differencing the simulator's trunk-frame
/// velocities over one control period.
class ImuModel {
 public:
  ImuModel() = default;
  explicit ImuModel(ImuConfig cfg) : cfg_(cfg) {}

  void reset(const sim::SimState& s);
  ImuSample sample(const sim::SimState& s, double dt, std::mt19937_64& rng);
  const ImuConfig& config() const { return cfg_; }

  template <class Archive>
  void serialize(Archive& ar) {
    ar(prev_v_, prev_w_);
  }

 private:
  ImuConfig cfg_;
  Vec3 prev_v_ = Vec3::Zero();
  Vec3 prev_w_ = Vec3::Zero();
};

struct KalmanState {
  Vec3 v_hat = Vec3::Zero();
  Mat3 covariance = Mat3::Identity();
  Mat3 process_noise = 0.5 * Mat3::Identity();
  Mat3 measurement_noise = 0.04 * Mat3::Identity();

  template <class Archive>
  void serialize(Archive& ar) {
    ar(v_hat, covariance, process_noise, measurement_noise);
  }
};

struct LegOdometrySample {
  Vec3 v_meas = Vec3::Zero();
  int valid_leg_count = 0;
};

/// Trunk velocity as minus the mean over legs of J(q) qd + omega x r_foot.
LegOdometrySample leg_odometry(const sim::Vec12& q, const sim::Vec12& qd, const Vec3& angular_velocity,
                               const sim::RobotModel& model);

KalmanState kalman_predict(const KalmanState& s, const Vec3& accel, double dt);

/// Identity-observation update. If P + R is singular the state is returned
/// unchanged and `skipped` (when given) is set.
KalmanState kalman_update(const KalmanState& s, const LegOdometrySample& z, bool* skipped = nullptr);

struct EstimatorConfig {
  double process_noise = 0.5;
  double measurement_noise = 0.04;
  double odometry_noise_std = 0.0;
  double initial_variance = 1.0;
};

/// Fused estimate plus the accel-only integral kept for comparison.
class VelocityEstimator {
 public:
  VelocityEstimator() = default;
  explicit VelocityEstimator(EstimatorConfig cfg);

  void reset(const Vec3& v0 = Vec3::Zero());
  /// Predict with the IMU, then correct with a (noised) leg-odometry reading.
  const Vec3& update(const ImuSample& imu, const sim::Vec12& q, const sim::Vec12& qd,
                     const sim::RobotModel& model, double dt, std::mt19937_64& rng);

  const Vec3& fused() const { return kf_.v_hat; }
  const Vec3& accel_only() const { return accel_only_; }
  const KalmanState& filter() const { return kf_; }
  const EstimatorConfig& config() const { return cfg_; }

  template <class Archive>
  void serialize(Archive& ar) {
    ar(kf_, accel_only_);
  }

 private:
  EstimatorConfig cfg_;
  KalmanState kf_;
  Vec3 accel_only_ = Vec3::Zero();
};

}  // namespace quadlearn::estimation
