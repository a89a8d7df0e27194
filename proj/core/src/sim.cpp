#include "quadlearn/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "quadlearn/errors.hpp"

namespace quadlearn::sim {

namespace {

Mat3 rot_x(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}

Mat3 rot_y(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}

Vec3 skew_apply(const Vec3& w, const Vec3& r) { return w.cross(r); }

bool finite(const SimState& s) {
  return s.position.allFinite() && s.orientation.coeffs().allFinite() &&
         s.linear_velocity.allFinite() && s.angular_velocity.allFinite() && s.q.allFinite() &&
         s.qd.allFinite();
}

}  // namespace

Vec12 RobotModel::q_lower() const {
  Vec12 v;
  for (int leg = 0; leg < kLegs; ++leg) v.segment<3>(3 * leg) = leg_lower;
  return v;
}

Vec12 RobotModel::q_upper() const {
  Vec12 v;
  for (int leg = 0; leg < kLegs; ++leg) v.segment<3>(3 * leg) = leg_upper;
  return v;
}

Vec12 RobotModel::nominal_q() const {
  const double theta = std::acos(nominal_height / (thigh_length + shank_length));
  Vec12 q;
  for (int leg = 0; leg < kLegs; ++leg) q.segment<3>(3 * leg) << 0.0, theta, -2.0 * theta;
  return q;
}

Mat3 RobotModel::trunk_inertia() const {
  const double a = trunk_dims.x(), b = trunk_dims.y(), c = trunk_dims.z();
  return (trunk_mass / 12.0 * Vec3(b * b + c * c, a * a + c * c, a * a + b * b)).asDiagonal();
}

void RobotModel::validate() const {
  if (trunk_mass <= 0 || (trunk_dims.array() <= 0).any()) {
    throw ConfigError("robot model: trunk mass and dimensions must be positive");
  }
  if (hip_length <= 0 || thigh_length <= 0 || shank_length <= 0) {
    throw ConfigError("robot model: link lengths must be positive");
  }
  if (torque_limit <= 0 || kp < 0 || kd < 0 || reflected_inertia <= 0) {
    throw ConfigError("robot model: torque limit and inertia must be positive, gains nonnegative");
  }
  if (nominal_height <= 0 || nominal_height >= thigh_length + shank_length) {
    throw ConfigError("robot model: nominal height outside the leg's reach");
  }
  const Vec12 q = nominal_q();
  if ((q.array() < q_lower().array()).any() || (q.array() > q_upper().array()).any()) {
    throw ConfigError("robot model: nominal posture violates the joint limits");
  }
}

void ContactParams::validate() const {
  if (stiffness <= 0 || damping <= 0 || tangential_damping < 0 || friction_coefficient < 0) {
    throw ConfigError("contact: stiffness and damping must be positive, friction nonnegative");
  }
}

Vec3 fk_leg(const Eigen::Vector3d& q3, int leg, const RobotModel& m) {
  const double s = side_sign(leg);
  const Vec3 shank(0, 0, -m.shank_length);
  const Vec3 thigh(0, 0, -m.thigh_length);
  const Vec3 hip(0, s * m.hip_length, 0);
  return m.hip_offsets[leg] + rot_x(q3[0]) * (hip + rot_y(q3[1]) * (thigh + rot_y(q3[2]) * shank));
}

IkResult ik_leg(const Vec3& p, int leg, const RobotModel& m) {
  IkResult r;
  const double s = side_sign(leg);
  const double l0 = m.hip_length, l1 = m.thigh_length, l2 = m.shank_length;
  Vec3 d = p - m.hip_offsets[leg];

  double r_yz = std::hypot(d.y(), d.z());
  if (r_yz < l0 * (1.0 + 1e-9)) {
    // Inside the abduction offset cylinder: push out radially (downwards if degenerate).
    const double scale = l0 * (1.0 + 1e-9);
    if (r_yz < 1e-12) {
      d.y() = 0.0;
      d.z() = -scale;
    } else {
      d.y() *= scale / r_yz;
      d.z() *= scale / r_yz;
    }
    r_yz = scale;
    r.reachable = false;
  }
  double zp = -std::sqrt(std::max(r_yz * r_yz - l0 * l0, 0.0));
  r.q[0] = std::atan2(d.z(), d.y()) - std::atan2(zp, s * l0);

  double x = d.x();
  double dist = std::hypot(x, zp);
  const double max_reach = (l1 + l2) * (1.0 - 1e-9);
  const double min_reach = std::abs(l1 - l2) + 1e-6;
  if (dist > max_reach || dist < min_reach) {
    const double target = std::clamp(dist, min_reach, max_reach);
    if (dist < 1e-12) {
      zp = -target;
    } else {
      x *= target / dist;
      zp *= target / dist;
    }
    dist = target;
    r.reachable = false;
  }
  const double c2 = std::clamp((dist * dist - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  r.q[2] = -std::acos(c2);
  r.q[1] = std::atan2(-x, -zp) - std::atan2(l2 * std::sin(r.q[2]), l1 + l2 * std::cos(r.q[2]));
  // wrap the abduction angle into (-pi, pi]
  r.q[0] = std::remainder(r.q[0], 2.0 * std::numbers::pi);
  return r;
}

Eigen::Matrix3d leg_jacobian(const Eigen::Vector3d& q3, int leg, const RobotModel& model,
                             double step) {
  Eigen::Matrix3d J;
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d hi = q3, lo = q3;
    hi[j] += step;
    lo[j] -= step;
    J.col(j) = (fk_leg(hi, leg, model) - fk_leg(lo, leg, model)) / (2.0 * step);
  }
  return J;
}

Vec12 pd_torque(const Vec12& q_target, const Vec12& q, const Vec12& qd, const RobotModel& m) {
  const Vec12 tau = m.kp * (q_target - q) - m.kd * qd;
  return tau.cwiseMax(-m.torque_limit).cwiseMin(m.torque_limit);
}

Vec12 clamp_to_limits(const Vec12& q, const RobotModel& m) {
  return q.cwiseMax(m.q_lower()).cwiseMin(m.q_upper());
}

SimState standing_state(const RobotModel& m, const ContactParams& c) {
  SimState s;
  s.q = m.nominal_q();
  double lowest = 0.0;
  for (int leg = 0; leg < kLegs; ++leg) {
    lowest = std::min(lowest, fk_leg(s.q.segment<3>(3 * leg), leg, m).z());
  }
  // Start at the static spring deflection so the trunk does not bounce.
  const double sink = m.trunk_mass * kGravity / (kLegs * c.stiffness);
  s.position = Vec3(0, 0, c.ground_height - lowest - sink);
  return s;
}

Vec3 contact_force(const Vec3& foot_pos, const Vec3& foot_vel, const ContactParams& c,
                   bool* in_contact) {
  const double depth = c.ground_height - foot_pos.z();
  if (in_contact) *in_contact = depth > 0.0;
  if (depth <= 0.0) return Vec3::Zero();
  const double fn = std::max(0.0, c.stiffness * depth - c.damping * foot_vel.z());
  Eigen::Vector2d ft = -c.tangential_damping * foot_vel.head<2>();
  const double cap = c.friction_coefficient * fn;
  const double mag = ft.norm();
  if (mag > cap) ft *= cap / mag;
  return Vec3(ft.x(), ft.y(), fn);
}

SimState physics_step(const SimState& state, const Vec12& command, const RobotModel& m,
                      const ContactParams& c, double dt) {
  if (!(dt > 0.0)) throw ConfigError("physics_step: dt must be positive");
  SimState s = state;

  // joints
  s.torque = pd_torque(command, s.q, s.qd, m);
  s.qd += s.torque * (dt / m.reflected_inertia);
  s.q += s.qd * dt;
  const Vec12 lo = m.q_lower(), hi = m.q_upper();
  for (int j = 0; j < kJoints; ++j) {
    if (s.q[j] < lo[j] || s.q[j] > hi[j]) {
      s.q[j] = std::clamp(s.q[j], lo[j], hi[j]);
      s.qd[j] = 0.0;
    }
  }

  // contacts
  const Mat3 R = s.orientation.toRotationMatrix();
  Vec3 force(0, 0, -m.trunk_mass * kGravity);
  Vec3 moment = Vec3::Zero();
  for (int leg = 0; leg < kLegs; ++leg) {
    const Eigen::Vector3d q3 = s.q.segment<3>(3 * leg);
    const Vec3 r_world = R * fk_leg(q3, leg, m);
    const Vec3 rel_vel = R * (leg_jacobian(q3, leg, m) * s.qd.segment<3>(3 * leg));
    const Vec3 foot_pos = s.position + r_world;
    const Vec3 foot_vel = s.linear_velocity + skew_apply(s.angular_velocity, r_world) + rel_vel;
    bool touching = false;
    const Vec3 f = contact_force(foot_pos, foot_vel, c, &touching);
    s.foot_contact[leg] = touching;
    force += f;
    moment += r_world.cross(f);
  }

  // trunk, velocities first then positions
  const Mat3 I_world = R * m.trunk_inertia() * R.transpose();
  const Vec3 w = s.angular_velocity;
  s.linear_velocity += force * (dt / m.trunk_mass);
  s.angular_velocity += I_world.ldlt().solve(moment - w.cross(I_world * w)) * dt;
  s.position += s.linear_velocity * dt;
  const Vec3 dtheta = s.angular_velocity * dt;
  const double angle = dtheta.norm();
  if (angle > 0.0) {
    s.orientation = Quat(Eigen::AngleAxisd(angle, dtheta / angle)) * s.orientation;
  }
  s.orientation.normalize();
  s.time = state.time + dt;

  if (!finite(s)) throw SimulationFault("non-finite simulator state at t=" + std::to_string(s.time));
  return s;
}

Vec12 delay_action(SimState& state, const Vec12& command, int delay_steps) {
  if (delay_steps < 0) throw ConfigError("delay_action: negative delay");
  state.delay_queue.push_back(command);
  while (static_cast<int>(state.delay_queue.size()) > delay_steps + 1) state.delay_queue.pop_front();
  return state.delay_queue.front();
}

Euler roll_pitch_yaw(const Quat& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Euler e;
  e.roll = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
  e.pitch = std::asin(std::clamp(2.0 * (w * y - z * x), -1.0, 1.0));
  e.yaw = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
  return e;
}

bool is_fallen(const SimState& s, const FallThresholds& t) {
  const Euler e = roll_pitch_yaw(s.orientation);
  return std::abs(e.roll) > t.max_angle || std::abs(e.pitch) > t.max_angle ||
         s.position.z() < t.min_height;
}

Vec3 body_linear_velocity(const SimState& s) {
  return s.orientation.conjugate() * s.linear_velocity;
}

Vec3 body_angular_velocity(const SimState& s) {
  return s.orientation.conjugate() * s.angular_velocity;
}

Vec3 gravity_in_body(const SimState& s) { return s.orientation.conjugate() * Vec3(0, 0, -1); }

double trunk_energy(const SimState& s, const RobotModel& m) {
  const Mat3 R = s.orientation.toRotationMatrix();
  const Mat3 I_world = R * m.trunk_inertia() * R.transpose();
  return 0.5 * m.trunk_mass * s.linear_velocity.squaredNorm() +
         0.5 * s.angular_velocity.dot(I_world * s.angular_velocity) +
         m.trunk_mass * kGravity * s.position.z();
}

}  // namespace quadlearn::sim
