#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "quadlearn/errors.hpp"
#include "quadlearn/tasks.hpp"

using namespace quadlearn;
using namespace quadlearn::tasks;
using std::numbers::pi;

namespace {

Vec2 rotate(const Vec2& v, double a) { return Eigen::Rotation2Dd(a) * v; }

double angle_gap(double a, double b) { return std::abs(std::remainder(a - b, 2 * pi)); }

bool contiguous(const Curriculum& c) {
  // unlocked bins form one arc: at most one locked->unlocked transition
  int rises = 0;
  const int n = c.num_bins();
  for (int i = 0; i < n; ++i) rises += (!c.unlocked(i) && c.unlocked((i + 1) % n)) ? 1 : 0;
  return rises <= 1;
}

}  // namespace

// -- rewards -----------------------------------------------------------------------

TEST(Rewards, TrackX) {
  EXPECT_EQ(reward_track_x(0.5, 0.5), 1.0);
  EXPECT_EQ(reward_track_x(-0.5, 0.5), 0.0);
  EXPECT_NEAR(reward_track_x(0.0, 0.5), 0.5, 1e-12);
  EXPECT_NEAR(reward_track_x(-0.4, 0.5), 0.1, 1e-12);
  EXPECT_NEAR(reward_track_x(0.3, 0.5), 0.8, 1e-12);
  EXPECT_EQ(reward_track_x(0.8, 0.5), 1.0);
  EXPECT_EQ(reward_track_x(-3.0, 0.5), 0.0);
  EXPECT_EQ(reward_track_x(7.0, 0.5), 0.0);
  EXPECT_THROW(reward_track_x(0.1, 0.0), ConfigError);
  EXPECT_THROW(reward_track_x(0.1, -0.5), ConfigError);
}

TEST(Rewards, TrackXBranchBoundaries) {
  const double vb = 0.5;
  EXPECT_EQ(reward_track_x(2 * vb, vb), 1.0);
  EXPECT_EQ(reward_track_x(4 * vb, vb), 0.0);
  EXPECT_EQ(reward_track_x(-vb, vb), 0.0);
  // the linear branch goes negative just below the upper cutoff
  EXPECT_NEAR(reward_track_x(3.5 * vb, vb), -0.25, 1e-12);
  EXPECT_NEAR(reward_track_x(std::nextafter(2 * vb, 10.0), vb), 0.5, 1e-12);
}

TEST(Rewards, MaxX) {
  EXPECT_EQ(reward_max_x(0, 0), 0.0);
  EXPECT_NEAR(reward_max_x(1.0, 0.2), 0.8, 1e-12);
  EXPECT_NEAR(reward_max_x(0.5, -0.5), 0.0, 1e-12);
}

TEST(Rewards, TrackXY) {
  EXPECT_NEAR(reward_track_xy(Vec2(0.3, -0.4), Vec2(0.3, -0.4)), 1.0, 1e-12);
  EXPECT_NEAR(reward_track_xy(Vec2(0.5, 0.2), Vec2(0.5, 0.0)), 0.8, 1e-12);
  EXPECT_NEAR(reward_track_xy(Vec2(0.0, 0.5), Vec2(0.0, 0.5)), 1.0, 1e-12);
  // target magnitude sets the scale of the along-target term
  EXPECT_NEAR(reward_track_xy(Vec2(0.0, 0.0), Vec2(0.3, 0.4)), 0.5, 1e-12);
  EXPECT_THROW(reward_track_xy(Vec2(1, 0), Vec2(0, 0)), ConfigError);
}

TEST(Rewards, TrackXYRotationInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1), ang(-pi, pi);
  for (int k = 0; k < 100; ++k) {
    const Vec2 v(u(rng), u(rng)), t(0.5 * u(rng) + 0.6, 0.5 * u(rng));
    const double a = ang(rng);
    EXPECT_NEAR(reward_track_xy(rotate(v, a), rotate(t, a)), reward_track_xy(v, t), 1e-9);
  }
}

TEST(Rewards, Penalties) {
  Vec12 tau = Vec12::Zero();
  auto p = penalties(0, 0, 0, tau);
  EXPECT_EQ(p.yaw, 0.0);
  EXPECT_EQ(p.upright, 0.0);
  EXPECT_EQ(p.energy, 0.0);
  tau[0] = 3;
  tau[1] = 4;
  p = penalties(2.0, 0.3, -0.4, tau);
  EXPECT_DOUBLE_EQ(p.yaw, 4.0);
  EXPECT_NEAR(p.upright, 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(p.energy, 25.0);
}

TEST(Rewards, Totals) {
  RewardWeights w;
  EXPECT_EQ(total_reward(TaskVariant::kFixedForward, 1.0, Penalties{}, w), 1.0);
  EXPECT_EQ(total_reward(TaskVariant::kFixedForward, 1.0, Penalties{0, 0.2, 0}, w), 0.0);
  EXPECT_NEAR(total_reward(TaskVariant::kMaxForward, reward_max_x(1.0, 0.0), Penalties{}, w), 2.0, 1e-12);
  EXPECT_NEAR(total_reward(TaskVariant::kOmni, 1.0, Penalties{4.0, 0.0, 25.0}, w), 1 - 0.4 - 0.0075, 1e-12);
  EXPECT_NEAR(total_reward(TaskVariant::kFixedForward, 0.9, Penalties{1.0, 0.01, 100.0}, w),
              0.9 - 0.1 - 0.1 - 0.03, 1e-12);
  w.floor_at_zero = false;
  EXPECT_NEAR(total_reward(TaskVariant::kFixedForward, 1.0, Penalties{0, 0.2, 0}, w), -1.0, 1e-12);
  w.use_penalties = false;
  EXPECT_EQ(total_reward(TaskVariant::kFixedForward, 0.7, Penalties{5, 5, 5}, w), 0.7);
}

TEST(Rewards, TotalIsFlooredAndBounded) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2, 2), pos(0, 3);
  RewardWeights w;
  for (int k = 0; k < 1000; ++k) {
    const Vec2 v(u(rng), u(rng));
    const Penalties p{pos(rng), pos(rng) * 0.05, pos(rng) * 100};
    for (auto var : {TaskVariant::kFixedForward, TaskVariant::kOmni}) {
      const double r = total_reward(var, tracking_term(var, v, Vec2(0.5, 0.1)), p, w);
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
  }
}

TEST(Rewards, TrackingTermDispatch) {
  EXPECT_NEAR(tracking_term(TaskVariant::kFixedForward, Vec2(0.0, 0.3), Vec2(0.5, 0)), 0.5, 1e-12);
  EXPECT_NEAR(tracking_term(TaskVariant::kMaxForward, Vec2(1.0, 0.3), Vec2::Zero()), 0.7, 1e-12);
  EXPECT_NEAR(tracking_term(TaskVariant::kOmni, Vec2(0.5, 0.2), Vec2(0.5, 0)), 0.8, 1e-12);
}

// -- observation -------------------------------------------------------------------

TEST(Observation, LayoutAndDims) {
  EXPECT_EQ(observation_dim(control::ControlArch::kJtp), 53);
  EXPECT_EQ(observation_dim(control::ControlArch::kCpg), 55);
  ObservationInputs in;
  in.q.setConstant(1);
  in.qd.setConstant(2);
  in.prev_action.setConstant(3);
  in.linear_acceleration.setConstant(4);
  in.angular_acceleration.setConstant(5);
  in.linear_velocity.setConstant(6);
  in.angular_velocity.setConstant(7);
  in.desired_velocity.setConstant(8);
  const Eigen::VectorXd o = build_observation(in, control::ControlArch::kJtp);
  ASSERT_EQ(o.size(), 53);
  const std::vector<std::pair<int, double>> blocks{{12, 1}, {12, 2}, {12, 3}, {3, 4}, {3, 5}, {3, 6}, {3, 7}, {2, 8}};
  int at = 0;
  for (auto [n, v] : blocks) {
    EXPECT_EQ(o.segment(at, n), Eigen::VectorXd::Constant(n, v)) << "block at " << at;
    at += n;
  }
  EXPECT_EQ(o.tail(3), Eigen::Vector3d(0, 0, -1));

  in.phase = control::cpg_phase_at(pi / 2);
  const Eigen::VectorXd c = build_observation(in, control::ControlArch::kCpg);
  ASSERT_EQ(c.size(), 55);
  EXPECT_EQ(c.head(53), o);
  EXPECT_NEAR(c[53], 0.25, 1e-12);
  EXPECT_NEAR(c[54], 0.75, 1e-12);
  EXPECT_EQ(build_observation(in, control::ControlArch::kCpg), c);
}

TEST(Observation, PhasePresenceChecked) {
  ObservationInputs in;
  EXPECT_THROW(build_observation(in, control::ControlArch::kCpg), ConfigError);
  in.phase = control::CpgPhase{};
  EXPECT_THROW(build_observation(in, control::ControlArch::kJtp), ConfigError);
}

// -- sampling ------------------------------------------------------------------------

TEST(Sampling, FixedForward) {
  TaskSpec t;
  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto s = sample_target(t, rng);
    EXPECT_EQ(s.velocity, Vec2(0.5, 0.0));
    EXPECT_EQ(s.bin, -1);
  }
}

TEST(Sampling, OmniUniform) {
  TaskSpec t;
  t.variant = TaskVariant::kOmni;
  std::mt19937_64 rng(4);
  const int n = 10000;
  Vec2 sum = Vec2::Zero();
  for (int k = 0; k < n; ++k) {
    const Vec2 v = sample_target(t, rng).velocity;
    EXPECT_LE(v.cwiseAbs().maxCoeff(), 0.5);
    EXPECT_GT(v.norm(), 0.0);
    sum += v;
  }
  const double sigma = 0.5 / std::sqrt(3.0) / std::sqrt(double(n));
  EXPECT_LT(std::abs(sum.x() / n), 3 * sigma);
  EXPECT_LT(std::abs(sum.y() / n), 3 * sigma);
}

TEST(Sampling, CurriculumStartsBackward) {
  TaskSpec t;
  t.variant = TaskVariant::kOmni;
  t.curriculum = true;
  Curriculum c(t.curriculum_bins_per_half);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 500; ++k) {
    const auto s = sample_target(t, rng, &c);
    EXPECT_EQ(s.bin, 0);
    EXPECT_NEAR(s.velocity.norm(), t.target_speed, 1e-12);
    EXPECT_LE(angle_gap(std::atan2(s.velocity.y(), s.velocity.x()), pi), c.bin_width() / 2 + 1e-12);
  }
}

// -- curriculum ---------------------------------------------------------------------

TEST(Curriculum, Geometry) {
  Curriculum c(8);
  EXPECT_EQ(c.num_bins(), 16);
  EXPECT_NEAR(c.bin_width(), pi / 8, 1e-15);
  EXPECT_NEAR(angle_gap(c.bin_center(0), pi), 0.0, 1e-12);
  EXPECT_NEAR(angle_gap(c.bin_center(8), 0.0), 0.0, 1e-12);
  for (int b = 0; b < 16; ++b) EXPECT_EQ(c.bin_of(c.bin_center(b)), b);
  EXPECT_EQ(c.active_set(), std::vector<int>{0});
}

TEST(Curriculum, ThresholdAndAdjacency) {
  Curriculum c(8);
  const auto same = curriculum_update(c, 0, 0.94);
  EXPECT_EQ(same.active_set(), std::vector<int>{0});
  EXPECT_FALSE(same.learned(0));
  const auto next = curriculum_update(c, 0, 0.95);
  EXPECT_TRUE(next.learned(0));
  EXPECT_TRUE(next.unlocked(1));
  EXPECT_TRUE(next.unlocked(15));
  EXPECT_EQ(next.active_set().size(), 3u);
  EXPECT_THROW(curriculum_update(c, 5, 1.0), InputError);
  EXPECT_THROW(curriculum_update(c, 0, -0.1), InputError);
  EXPECT_THROW(curriculum_update(c, 0, NAN), InputError);
}

TEST(Curriculum, GrowsContiguouslyToFullCircle) {
  Curriculum c(8);
  std::mt19937_64 rng(6);
  int steps = 0;
  while (!c.complete() && steps < 1000) {
    const auto active = c.active_set();
    const int bin = active[std::uniform_int_distribution<std::size_t>(0, active.size() - 1)(rng)];
    const std::size_t before = c.active_set().size();
    c = curriculum_update(c, bin, std::uniform_real_distribution<double>(0.5, 1.2)(rng));
    EXPECT_GE(c.active_set().size(), before);
    EXPECT_TRUE(contiguous(c));
    ++steps;
  }
  ASSERT_TRUE(c.complete());
  EXPECT_EQ(c.active_set().size(), 16u);
  const auto again = curriculum_update(c, 3, 1.0);
  for (int b = 0; b < 16; ++b) {
    EXPECT_TRUE(again.learned(b));
    EXPECT_TRUE(again.unlocked(b));
  }
}

TEST(Curriculum, AchievedRatio) {
  EXPECT_DOUBLE_EQ(achieved_ratio(0.5, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(achieved_ratio(0.475, 0.5), 0.95);
  EXPECT_EQ(achieved_ratio(-0.2, 0.5), 0.0);
}

TEST(TaskSpec, Validation) {
  TaskSpec t;
  t.target_speed = 0.0;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_THROW(parse_task("backflip"), ConfigError);
  EXPECT_EQ(parse_task("omni"), TaskVariant::kOmni);
}
