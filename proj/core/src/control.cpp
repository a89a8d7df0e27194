#include "quadlearn/control.hpp"

#include <algorithm>
#include <cmath>

#include "quadlearn/errors.hpp"

namespace quadlearn::control {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kHalfPi = 0.5 * std::numbers::pi;

double wrap_phase(double t) {
  double w = std::fmod(t, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}
}  // namespace

std::string to_string(ControlArch c) { return c == ControlArch::kJtp ? "jtp" : "cpg"; }

ControlArch parse_control(std::string_view name) {
  if (name == "jtp") return ControlArch::kJtp;
  if (name == "cpg") return ControlArch::kCpg;
  throw ConfigError("unknown control architecture '" + std::string(name) + "'");
}

double lowpass_step(double x, double dt, LowpassState& s, double cutoff) {
  if (!(dt > 0.0)) throw ConfigError("lowpass_step: dt must be positive");
  if (!s.initialized) {
    s.x_prev = x;
    s.initialized = true;
    return x;
  }
  const double a = smoothing_factor(cutoff, dt);
  s.x_prev = a * x + (1.0 - a) * s.x_prev;
  return s.x_prev;
}

double one_euro_step(double x, double dt, OneEuroState& s, const OneEuroParams& p) {
  if (!(dt > 0.0)) throw ConfigError("one_euro_step: dt must be positive");
  if (!s.initialized) {
    s.x_prev = x;
    s.dx_prev = 0.0;
    s.initialized = true;
    return x;
  }
  const double dx = (x - s.x_prev) / dt;
  const double a_d = smoothing_factor(p.dcutoff, dt);
  const double dx_hat = a_d * dx + (1.0 - a_d) * s.dx_prev;
  const double cutoff = p.mincutoff + p.beta * std::abs(dx_hat);
  const double a = smoothing_factor(cutoff, dt);
  s.x_prev = a * x + (1.0 - a) * s.x_prev;
  s.dx_prev = dx_hat;
  return s.x_prev;
}

std::string to_string(FilterKind k) {
  switch (k) {
    case FilterKind::kNone: return "none";
    case FilterKind::kLowpass: return "lowpass";
    case FilterKind::kOneEuro: return "one_euro";
  }
  return "unknown";
}

FilterKind parse_filter(std::string_view name) {
  if (name == "none") return FilterKind::kNone;
  if (name == "lowpass") return FilterKind::kLowpass;
  if (name == "one_euro") return FilterKind::kOneEuro;
  throw ConfigError("unknown filter '" + std::string(name) + "'");
}

void FilterConfig::validate() const {
  if (lowpass_cutoff <= 0 || one_euro.mincutoff <= 0 || one_euro.dcutoff <= 0 || one_euro.beta < 0) {
    throw ConfigError("filter: cutoffs must be positive and beta nonnegative");
  }
}

JointFilter::JointFilter(FilterConfig cfg) : cfg_(cfg) { cfg_.validate(); }

Vec12 JointFilter::apply(const Vec12& x, double dt) {
  Vec12 y = x;
  for (int j = 0; j < sim::kJoints; ++j) {
    switch (cfg_.kind) {
      case FilterKind::kNone: break;
      case FilterKind::kLowpass: y[j] = lowpass_step(x[j], dt, lowpass_[j], cfg_.lowpass_cutoff); break;
      case FilterKind::kOneEuro: y[j] = one_euro_step(x[j], dt, one_euro_[j], cfg_.one_euro); break;
    }
  }
  return y;
}

void JointFilter::reset() {
  lowpass_.fill({});
  one_euro_.fill({});
}

void JtpConfig::validate(const sim::RobotModel& model) const {
  if (phi <= 0) throw ConfigError("jtp: phi must be positive");
  if ((nominal_q.array() < model.q_lower().array()).any() ||
      (nominal_q.array() > model.q_upper().array()).any()) {
    throw ConfigError("jtp: nominal posture outside the joint limits");
  }
  filter.validate();
}

Vec12 jtp_targets(const Vec12& action, const JtpConfig& cfg, const sim::RobotModel& model) {
  const Vec12 offset = (action * cfg.phi).cwiseMax(-cfg.phi).cwiseMin(cfg.phi);
  return sim::clamp_to_limits(cfg.nominal_q + offset, model);
}

void CpgConfig::validate() const {
  if (frequency <= 0 || h <= 0 || (offset_bounds.array() < 0).any()) {
    throw ConfigError("cpg: frequency and foot height must be positive, offset bounds nonnegative");
  }
}

Vec12 CpgConfig::offset_box() const {
  Vec12 b;
  for (int leg = 0; leg < sim::kLegs; ++leg) b.segment<3>(3 * leg) = offset_bounds;
  return b;
}

CpgPhase cpg_phase_at(double t) {
  CpgPhase p;
  p.t = wrap_phase(t);
  p.l1 = p.t / kTwoPi;
  p.l2 = p.l1 + 0.5;
  if (p.l2 >= 1.0) p.l2 -= 1.0;
  return p;
}

CpgPhase cpg_advance(const CpgPhase& phase, double dt, const CpgConfig& cfg) {
  if (!(dt > 0.0)) throw ConfigError("cpg_advance: dt must be positive");
  return cpg_phase_at(phase.t + kTwoPi * cfg.frequency * dt);
}

double leg_phase(const CpgPhase& phase, int leg, const CpgConfig& cfg) {
  return wrap_phase(phase.t + cfg.phase_offsets[leg]);
}

double cpg_foot_height(double t_leg, const CpgConfig& cfg) {
  const double t = wrap_phase(t_leg);
  if (t < kHalfPi) {
    const double s = t / kHalfPi;
    return cfg.h * (-2.0 * s * s * s + 3.0 * s * s);
  }
  if (t < std::numbers::pi) {
    const double s = (t - kHalfPi) / kHalfPi;
    return cfg.h * (2.0 * s * s * s - 3.0 * s * s + 1.0);
  }
  return 0.0;
}

Vec3 stance_point(int leg, const sim::RobotModel& model) {
  return sim::fk_leg(model.nominal_q().segment<3>(3 * leg), leg, model);
}

CpgTargets cpg_targets(const Vec12& a_cpg, const CpgPhase& phase, const CpgConfig& cfg,
                       const sim::RobotModel& model) {
  CpgTargets out;
  const Vec12 box = cfg.offset_box();
  const Vec12 a = a_cpg.cwiseMax(-box).cwiseMin(box);
  for (int leg = 0; leg < sim::kLegs; ++leg) {
    Vec3 p = stance_point(leg, model);
    p.z() += cpg_foot_height(leg_phase(phase, leg, cfg), cfg);
    p += a.segment<3>(3 * leg);
    const auto ik = sim::ik_leg(p, leg, model);
    out.q_target.segment<3>(3 * leg) = ik.q;
    out.reachable = out.reachable && ik.reachable;
  }
  out.q_target = sim::clamp_to_limits(out.q_target, model);
  return out;
}

Vec12 cpg_stride_offsets(const CpgPhase& phase, double stride, const CpgConfig& cfg) {
  Vec12 a = Vec12::Zero();
  for (int leg = 0; leg < sim::kLegs; ++leg) {
    const double t = leg_phase(phase, leg, cfg);
    a[3 * leg] = t < std::numbers::pi ? -stride * std::cos(t)
                                      : stride * (1.0 - 2.0 * (t - std::numbers::pi) / std::numbers::pi);
  }
  return a;
}

}  // namespace quadlearn::control
