#include "quadlearn/estimation.hpp"

#include <cmath>

#include "quadlearn/errors.hpp"

namespace quadlearn::estimation {

namespace {
Vec3 gaussian3(double stddev, std::mt19937_64& rng) {
  if (stddev <= 0.0) return Vec3::Zero();
  std::normal_distribution<double> n(0.0, stddev);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return Vec3(x, y, z);
}
}  // namespace

void ImuModel::reset(const sim::SimState& s) {
  prev_v_ = sim::body_linear_velocity(s);
  prev_w_ = sim::body_angular_velocity(s);
}

ImuSample ImuModel::sample(const sim::SimState& s, double dt, std::mt19937_64& rng) {
  if (!(dt > 0.0)) throw ConfigError("ImuModel::sample: dt must be positive");
  const Vec3 v = sim::body_linear_velocity(s);
  const Vec3 w = sim::body_angular_velocity(s);
  ImuSample out;
  out.linear_acceleration = (v - prev_v_) / dt + cfg_.accel_bias;
  out.linear_acceleration += gaussian3(cfg_.accel_noise_std, rng);
  out.angular_acceleration = (w - prev_w_) / dt;
  out.angular_velocity = w + gaussian3(cfg_.gyro_noise_std, rng);
  prev_v_ = v;
  prev_w_ = w;
  return out;
}

LegOdometrySample leg_odometry(const sim::Vec12& q, const sim::Vec12& qd, const Vec3& omega,
                               const sim::RobotModel& model) {
  LegOdometrySample out;
  Vec3 sum = Vec3::Zero();
  for (int leg = 0; leg < sim::kLegs; ++leg) {
    const Eigen::Vector3d q3 = q.segment<3>(3 * leg);
    const Vec3 r = sim::fk_leg(q3, leg, model);
    const Vec3 rel = sim::leg_jacobian(q3, leg, model) * qd.segment<3>(3 * leg);
    sum += -(rel + omega.cross(r));
    ++out.valid_leg_count;
  }
  out.v_meas = sum / out.valid_leg_count;
  return out;
}

KalmanState kalman_predict(const KalmanState& s, const Vec3& accel, double dt) {
  if (!(dt > 0.0)) throw ConfigError("kalman_predict: dt must be positive");
  KalmanState n = s;
  n.v_hat += accel * dt;
  n.covariance += s.process_noise * dt;
  return n;
}

KalmanState kalman_update(const KalmanState& s, const LegOdometrySample& z, bool* skipped) {
  if (skipped) *skipped = false;
  const Mat3 S = s.covariance + s.measurement_noise;
  Eigen::FullPivLU<Mat3> lu(S);
  if (!lu.isInvertible() || !S.allFinite()) {
    if (skipped) *skipped = true;
    return s;
  }
  const Mat3 K = s.covariance * lu.inverse();
  KalmanState n = s;
  n.v_hat += K * (z.v_meas - s.v_hat);
  const Mat3 P = (Mat3::Identity() - K) * s.covariance;
  n.covariance = 0.5 * (P + P.transpose());
  return n;
}

VelocityEstimator::VelocityEstimator(EstimatorConfig cfg) : cfg_(cfg) {
  if (cfg_.process_noise < 0 || cfg_.measurement_noise < 0 || cfg_.odometry_noise_std < 0 ||
      cfg_.initial_variance < 0) {
    throw ConfigError("estimator: noise parameters must be nonnegative");
  }
  reset();
}

void VelocityEstimator::reset(const Vec3& v0) {
  kf_ = KalmanState{};
  kf_.v_hat = v0;
  kf_.covariance = cfg_.initial_variance * Mat3::Identity();
  kf_.process_noise = cfg_.process_noise * Mat3::Identity();
  kf_.measurement_noise = cfg_.measurement_noise * Mat3::Identity();
  accel_only_ = v0;
}

const Vec3& VelocityEstimator::update(const ImuSample& imu, const sim::Vec12& q, const sim::Vec12& qd,
                                      const sim::RobotModel& model, double dt, std::mt19937_64& rng) {
  accel_only_ += imu.linear_acceleration * dt;
  kf_ = kalman_predict(kf_, imu.linear_acceleration, dt);
  auto z = leg_odometry(q, qd, imu.angular_velocity, model);
  z.v_meas += gaussian3(cfg_.odometry_noise_std, rng);
  kf_ = kalman_update(kf_, z);
  return kf_.v_hat;
}

}  // namespace quadlearn::estimation
