#pragma once

// Rigid trunk on four massless 3-DoF legs. Joints are PD-tracked against a
// reflected inertia; feet push on the trunk through spring-damper contacts
// with a Coulomb cap on the tangential force.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <deque>

namespace quadlearn::sim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Vec12 = Eigen::Matrix<double, 12, 1>;

inline constexpr int kLegs = 4;
inline constexpr int kJoints = 12;
inline constexpr double kGravity = 9.81;

enum Leg : int { kFrontLeft = 0, kFrontRight = 1, kHindLeft = 2, kHindRight = 3 };

/// +1 for left legs, -1 for right legs.
inline double side_sign(int leg) { return (leg == kFrontLeft || leg == kHindLeft) ? 1.0 : -1.0; }

struct RobotModel {
  double trunk_mass = 12.0;
  Vec3 trunk_dims{0.6, 0.4, 0.4};
  std::array<Vec3, kLegs> hip_offsets{Vec3(0.3, 0.2, 0.0), Vec3(0.3, -0.2, 0.0),
                                      Vec3(-0.3, 0.2, 0.0), Vec3(-0.3, -0.2, 0.0)};
  double hip_length = 0.06;
  double thigh_length = 0.22;
  double shank_length = 0.22;
  Eigen::Vector3d leg_lower{-0.8, -1.0, -2.7};  // per leg: abduction, hip, knee
  Eigen::Vector3d leg_upper{0.8, 2.0, -0.05};
  double torque_limit = 18.0;
  double kp = 20.0;
  double kd = 0.5;
  double reflected_inertia = 0.003125;  // kd^2 / (4 kp): critically damped servo
  double nominal_height = 0.30;  // hip-to-foot drop at the nominal posture

  Vec12 q_lower() const;
  Vec12 q_upper() const;
  /// (0, theta, -2 theta) per leg with the foot `nominal_height` below the hip.
  Vec12 nominal_q() const;
  /// Solid-box inertia about the trunk centre.
  Mat3 trunk_inertia() const;
  /// Throws ConfigError on non-positive lengths or a nominal pose outside the limits.
  void validate() const;
};

struct ContactParams {
  double stiffness = 2e4;
  double damping = 200.0;
  double friction_coefficient = 0.8;
  double tangential_damping = 400.0;
  double ground_height = 0.0;

  static ContactParams indoor() { return {}; }
  static ContactParams outdoor() {
    ContactParams c;
    c.friction_coefficient = 1.2;
    return c;
  }
  void validate() const;
};

struct FallThresholds {
  double max_angle = 0.6;
  double min_height = 0.12;
};

struct SimState {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 linear_velocity = Vec3::Zero();   // world frame
  Vec3 angular_velocity = Vec3::Zero();  // world frame
  Vec12 q = Vec12::Zero();
  Vec12 qd = Vec12::Zero();
  Vec12 torque = Vec12::Zero();  // last applied (clamped) joint torques
  std::array<bool, kLegs> foot_contact{};
  double time = 0.0;
  std::deque<Vec12> delay_queue;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(position, orientation.coeffs(), linear_velocity, angular_velocity, q, qd, torque,
       foot_contact, time, delay_queue);
  }
};

/// Foot position relative to the trunk centre, in the trunk frame.
Vec3 fk_leg(const Eigen::Vector3d& q3, int leg, const RobotModel& model);

struct IkResult {
  Eigen::Vector3d q;
  bool reachable = true;  // false when the target had to be clamped
};

/// Closed-form inverse of fk_leg on the knee-backward branch. Unreachable
/// targets are pulled onto the workspace boundary and flagged.
IkResult ik_leg(const Vec3& p, int leg, const RobotModel& model);

/// d fk_leg / d q3 by central differences.
Eigen::Matrix3d leg_jacobian(const Eigen::Vector3d& q3, int leg, const RobotModel& model,
                             double step = 1e-6);

Vec12 pd_torque(const Vec12& q_target, const Vec12& q, const Vec12& qd, const RobotModel& model);

/// Clamps every joint into the model's limits.
Vec12 clamp_to_limits(const Vec12& q, const RobotModel& model);

/// Nominal stance at rest: feet touching the ground, zero velocities.
SimState standing_state(const RobotModel& model, const ContactParams& contact);

/// Contact force on one foot given its world position and velocity.
Vec3 contact_force(const Vec3& foot_pos, const Vec3& foot_vel, const ContactParams& contact,
                   bool* in_contact = nullptr);

/// One semi-implicit Euler substep. Throws SimulationFault on a non-finite state.
SimState physics_step(const SimState& state, const Vec12& command, const RobotModel& model,
                      const ContactParams& contact, double dt);

/// Enqueues `command` and returns the command issued `delay_steps` control
/// periods ago (the oldest queued one while the queue is still filling).
Vec12 delay_action(SimState& state, const Vec12& command, int delay_steps);

struct Euler {
  double roll = 0.0, pitch = 0.0, yaw = 0.0;
};
Euler roll_pitch_yaw(const Quat& q);

bool is_fallen(const SimState& state, const FallThresholds& thresholds);

Vec3 body_linear_velocity(const SimState& s);
Vec3 body_angular_velocity(const SimState& s);
/// World down-axis expressed in the trunk frame.
Vec3 gravity_in_body(const SimState& s);

/// Trunk translational plus rotational kinetic energy plus potential energy.
double trunk_energy(const SimState& s, const RobotModel& model);

}  // namespace quadlearn::sim
