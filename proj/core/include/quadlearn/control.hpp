#pragma once

// Action-to-joint-target pipelines. JTP adds clipped offsets to the nominal
// posture and optionally filters them per joint; CPG turns Cartesian foot
// offsets on top of a fixed-frequency trot into joint targets through IK.

#include <array>
#include <numbers>
#include <string>
#include <string_view>

#include "quadlearn/sim.hpp"

namespace quadlearn::control {

using sim::Vec12;
using sim::Vec3;

enum class ControlArch { kJtp, kCpg };

std::string to_string(ControlArch c);
/// "jtp" or "cpg". Throws ConfigError otherwise.
ControlArch parse_control(std::string_view name);

// -- filters -----------------------------------------------------------------

/// Exponential-smoothing factor for a first-order filter at `cutoff` Hz.
inline double smoothing_factor(double cutoff, double dt) {
  return 1.0 / (1.0 + 1.0 / (2.0 * std::numbers::pi * cutoff * dt));
}

struct LowpassState {
  double x_prev = 0.0;
  bool initialized = false;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(x_prev, initialized);
  }
};

/// First call returns x unchanged; later calls blend with the previous output.
double lowpass_step(double x, double dt, LowpassState& s, double cutoff = 0.4);

struct OneEuroParams {
  double mincutoff = 2.5;
  double beta = 0.1;
  double dcutoff = 100.0;
};

struct OneEuroState {
  double x_prev = 0.0;
  double dx_prev = 0.0;
  bool initialized = false;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(x_prev, dx_prev, initialized);
  }
};

double one_euro_step(double x, double dt, OneEuroState& s, const OneEuroParams& p = {});

enum class FilterKind { kNone, kLowpass, kOneEuro };

std::string to_string(FilterKind k);
/// "none", "lowpass", "one_euro". Throws ConfigError otherwise.
FilterKind parse_filter(std::string_view name);

struct FilterConfig {
  FilterKind kind = FilterKind::kOneEuro;
  double lowpass_cutoff = 0.4;
  OneEuroParams one_euro;
  void validate() const;
};

/// Independent filter per joint.
class JointFilter {
 public:
  JointFilter() = default;
  explicit JointFilter(FilterConfig cfg);

  Vec12 apply(const Vec12& x, double dt);
  void reset();
  const FilterConfig& config() const { return cfg_; }

  template <class Archive>
  void serialize(Archive& ar) {
    ar(lowpass_, one_euro_);
  }

 private:
  FilterConfig cfg_;
  std::array<LowpassState, sim::kJoints> lowpass_{};
  std::array<OneEuroState, sim::kJoints> one_euro_{};
};

// -- joint target prediction -------------------------------------------------

struct JtpConfig {
  Vec12 nominal_q = Vec12::Zero();
  double phi = 0.4;
  FilterConfig filter;
  void validate(const sim::RobotModel& model) const;
};

/// nominal + clamp(action * phi, -phi, phi), then clamped into the joint limits.
Vec12 jtp_targets(const Vec12& action, const JtpConfig& cfg, const sim::RobotModel& model);

// -- central pattern generator -----------------------------------------------

struct CpgConfig {
  double frequency = 1.5;
  double h = 0.15;
  sim::Vec3 offset_bounds{0.03, 0.02, 0.02};  // per-foot x, y, z box [m]
  // Diagonal trot: FL/HR in group A, FR/HL half a cycle later.
  std::array<double, sim::kLegs> phase_offsets{0.0, std::numbers::pi, std::numbers::pi, 0.0};
  void validate() const;
  /// offset_bounds repeated for the four feet.
  Vec12 offset_box() const;
};

struct CpgPhase {
  double t = 0.0;   // [0, 2 pi)
  double l1 = 0.0;  // group A, normalized
  double l2 = 0.5;  // group B, normalized

  template <class Archive>
  void serialize(Archive& ar) {
    ar(t, l1, l2);
  }
};

CpgPhase cpg_phase_at(double t);
CpgPhase cpg_advance(const CpgPhase& phase, double dt, const CpgConfig& cfg);

/// Phase of one leg's own cycle in [0, 2 pi): swing on [0, pi), stance after.
double leg_phase(const CpgPhase& phase, int leg, const CpgConfig& cfg);

/// Swing rises over [0, pi/2), falls over [pi/2, pi); zero during stance.
double cpg_foot_height(double t_leg, const CpgConfig& cfg);

/// Stance foot position (trunk frame) of a leg at the nominal posture.
Vec3 stance_point(int leg, const sim::RobotModel& model);

struct CpgTargets {
  Vec12 q_target = Vec12::Zero();
  bool reachable = true;  // false if any leg's IK clamped its target
};

/// `a_cpg` holds (x, y, z) offsets per leg, clamped to the configured bound.
CpgTargets cpg_targets(const Vec12& a_cpg, const CpgPhase& phase, const CpgConfig& cfg,
                       const sim::RobotModel& model);

/// Scripted foot offsets for a forward trot: each foot sweeps backwards by
/// 2 * stride during stance and returns during swing.
Vec12 cpg_stride_offsets(const CpgPhase& phase, double stride, const CpgConfig& cfg);

}  // namespace quadlearn::control
