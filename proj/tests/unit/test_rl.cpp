#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "quadlearn/errors.hpp"
#include "quadlearn/rl.hpp"

using namespace quadlearn;
using namespace quadlearn::rl;
using MatD = nn::Matrix<double>;
using VecD = nn::Vector<double>;

namespace {

AlgoVariant small(Algo a, int utd = 0) {
  auto v = AlgoVariant::preset(a, utd);
  v.hidden = {16, 16};
  return v;
}

Batch<double> random_batch(int obs_dim, int act_dim, int b, Rng& rng, double terminal_p = 0.2) {
  Batch<double> batch;
  batch.obs = nn::standard_normal<double>(obs_dim, b, rng);
  batch.action = nn::standard_normal<double>(act_dim, b, rng).array().tanh();
  batch.reward = nn::standard_normal<double>(b, 1, rng).col(0);
  batch.next_obs = nn::standard_normal<double>(obs_dim, b, rng);
  std::bernoulli_distribution term(terminal_p);
  batch.terminal.resize(b);
  for (int i = 0; i < b; ++i) batch.terminal[i] = term(rng) ? 1.0 : 0.0;
  return batch;
}

void make_constant(nn::Mlp<double>& net, double c) {
  net.params().setZero();
  net.params()[net.params().size() - 1] = c;
}

Transition<double> transition(double tag, int obs_dim = 2, int act_dim = 1) {
  return {VecD::Constant(obs_dim, tag), VecD::Constant(act_dim, tag), tag, VecD::Constant(obs_dim, tag), false};
}

}  // namespace

// -- replay ------------------------------------------------------------------

TEST(Replay, FifoEviction) {
  ReplayBuffer<double> b(2, 2, 1);
  b.push(transition(1));
  EXPECT_EQ(b.size(), 1);
  b.push(transition(2));
  b.push(transition(3));
  EXPECT_EQ(b.size(), 2);
  EXPECT_EQ(b.at(0).reward, 2.0);
  EXPECT_EQ(b.at(1).reward, 3.0);
}

TEST(Replay, UniformSampling) {
  ReplayBuffer<double> b(4, 2, 1);
  for (int i = 0; i < 4; ++i) b.push(transition(i));
  Rng rng(11);
  int counts[4] = {0, 0, 0, 0};
  const auto batch = b.sample(1000, rng);
  for (int i = 0; i < 1000; ++i) counts[static_cast<int>(batch.reward[i])]++;
  const double sigma = std::sqrt(1000 * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - 250.0), 3 * sigma);
}

TEST(Replay, DimensionMismatchThrows) {
  ReplayBuffer<double> b(4, 2, 1);
  EXPECT_THROW(b.push(transition(0, 3, 1)), ConfigError);
}

TEST(Replay, GrowsPastInitialAllocation) {
  ReplayBuffer<float> b(10000, 2, 1);
  for (int i = 0; i < 5000; ++i) {
    Transition<float> t{Eigen::VectorXf::Constant(2, float(i)), Eigen::VectorXf::Constant(1, 0.f), float(i),
                        Eigen::VectorXf::Constant(2, 0.f), false};
    b.push(t);
  }
  EXPECT_EQ(b.size(), 5000);
  EXPECT_EQ(b.at(4321).reward, 4321.0f);
}

// -- variants ----------------------------------------------------------------

TEST(Variant, PresetsFollowTheHyperparameterTable) {
  const auto sac = AlgoVariant::preset(Algo::kSac);
  EXPECT_EQ(sac.utd, 1);
  EXPECT_TRUE(sac.use_target_nets);
  EXPECT_DOUBLE_EQ(sac.learning_rate, 0.003);
  EXPECT_EQ(sac.batch_size, 256);
  EXPECT_EQ(AlgoVariant::preset(Algo::kSac, 20).utd, 20);

  const auto cq = AlgoVariant::preset(Algo::kCrossQ);
  EXPECT_EQ(cq.utd, 1);
  EXPECT_FALSE(cq.use_target_nets);
  EXPECT_TRUE(cq.use_batchnorm_joint);
  EXPECT_DOUBLE_EQ(cq.learning_rate, 0.005);
  EXPECT_EQ(cq.batch_size, 128);

  const auto redq = AlgoVariant::preset(Algo::kRedq);
  EXPECT_EQ(redq.num_critics, 10);
  EXPECT_EQ(redq.subset_size, 2);
  EXPECT_EQ(redq.utd, 20);

  const auto droq = AlgoVariant::preset(Algo::kDroq);
  EXPECT_GT(droq.dropout_rate, 0.0);
  EXPECT_EQ(droq.utd, 20);
  for (const auto& v : {sac, cq, redq, droq}) {
    EXPECT_DOUBLE_EQ(v.gamma, 0.99);
    EXPECT_EQ(v.hidden, (std::vector<int>{256, 256}));
  }
}

TEST(Variant, InvariantsEnforced) {
  auto cq = AlgoVariant::preset(Algo::kCrossQ);
  cq.utd = 2;
  EXPECT_THROW(cq.validate(), ConfigError);
  cq = AlgoVariant::preset(Algo::kCrossQ);
  cq.use_target_nets = true;
  EXPECT_THROW(cq.validate(), ConfigError);
  auto sac = AlgoVariant::preset(Algo::kSac);
  sac.use_target_nets = false;
  EXPECT_THROW(sac.validate(), ConfigError);
  auto redq = AlgoVariant::preset(Algo::kRedq);
  redq.num_critics = 5;
  EXPECT_THROW(redq.validate(), ConfigError);
  auto droq = AlgoVariant::preset(Algo::kDroq);
  droq.dropout_rate = 0.0;
  EXPECT_THROW(droq.validate(), ConfigError);
  EXPECT_THROW(parse_algo("ppo"), ConfigError);
}

TEST(Agent, TargetNetworkAllocation) {
  Rng rng(1);
  EXPECT_TRUE(Agent<double>::create(small(Algo::kCrossQ), 3, 2, rng).params.target_critics.empty());
  const auto sac = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  ASSERT_EQ(sac.params.target_critics.size(), 2u);
  EXPECT_EQ(sac.params.target_critics[0].params(), sac.params.critics[0].params());
  EXPECT_EQ(Agent<double>::create(small(Algo::kRedq), 3, 2, rng).params.critics.size(), 10u);
  EXPECT_DOUBLE_EQ(sac.target_entropy, -2.0);
}

// -- targets -----------------------------------------------------------------

TEST(Targets, TerminalGivesReward) {
  Rng rng(2);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  auto b = random_batch(3, 2, 5, rng, 1.0);
  const VecD y = critic_targets(b, agent, rng);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(y[i], b.reward[i]);
}

TEST(Targets, ForcedArithmetic) {
  Rng rng(3);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  for (auto& t : agent.params.target_critics) make_constant(t, 2.0);
  agent.params.log_temperature = -1000.0;  // alpha = 0
  auto b = random_batch(3, 2, 1, rng, 0.0);
  b.reward[0] = 1.0;
  EXPECT_NEAR(critic_targets(b, agent, rng)[0], 2.98, 1e-12);
}

TEST(Targets, MatchesDirectExpression) {
  Rng rng(4);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  agent.params.log_temperature = std::log(0.3);
  auto b = random_batch(3, 2, 6, rng);
  Rng r1 = rng, r2 = rng;
  const VecD y = critic_targets(b, agent, r1);
  const auto next = sample_policy(agent, b.next_obs, r2);
  const MatD x = critic_input<double>(b.next_obs, next.action);
  for (int i = 0; i < 6; ++i) {
    double m = INFINITY;
    for (auto& t : agent.params.target_critics) m = std::min(m, t.forward_eval(x)(0, i));
    EXPECT_NEAR(y[i], b.reward[i] + 0.99 * (1 - b.terminal[i]) * (m - 0.3 * next.log_prob[i]), 1e-12);
  }
}

TEST(CrossQ, JointPassEqualsConcatenation) {
  Rng rng(5);
  auto agent = Agent<double>::create(small(Algo::kCrossQ), 3, 2, rng);
  auto b = random_batch(3, 2, 8, rng);
  const MatD next_action = nn::standard_normal<double>(2, 8, rng).array().tanh();

  auto joint = agent.params.critics;
  const MatD q = joint_critic_forward<double>(joint, b, next_action);

  MatD cat(5, 16);
  cat.leftCols(8) = critic_input<double>(b.obs, b.action);
  cat.rightCols(8) = critic_input<double>(b.next_obs, next_action);
  for (std::size_t i = 0; i < joint.size(); ++i) {
    auto ref = agent.params.critics[i];
    const MatD qr = ref.forward(cat, nn::Mode::kTrain);
    EXPECT_LT((q.row(i) - qr).cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t l = 0; l < ref.running_mean().size(); ++l) {
      EXPECT_LT((joint[i].running_mean()[l] - ref.running_mean()[l]).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((joint[i].running_var()[l] - ref.running_var()[l]).cwiseAbs().maxCoeff(), 1e-12);
    }
    // first hidden layer statistics by hand over all 16 columns
    const auto& c = agent.params.critics[i];
    const MatD pre = (c.weights(0) * cat).colwise() + VecD(c.bias(0));
    const VecD mean = pre.rowwise().mean();
    const VecD var = (pre.colwise() - mean).array().square().rowwise().mean();
    const VecD m0 = c.running_mean()[0], v0 = c.running_var()[0];
    EXPECT_LT((joint[i].running_mean()[0] - (0.99 * m0 + 0.01 * mean)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((joint[i].running_var()[0] - (0.99 * v0 + 0.01 * var)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// -- critic --------------------------------------------------------------------

TEST(Critic, PerfectCriticHasZeroLossAndGradient) {
  Rng rng(6);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  const double c = 1.5;
  for (auto& n : agent.params.critics) make_constant(n, c);
  for (auto& n : agent.params.target_critics) make_constant(n, c);
  agent.params.log_temperature = -1000.0;
  auto b = random_batch(3, 2, 4, rng, 0.0);
  b.reward.setConstant(c * (1 - 0.99));
  const auto l = critic_loss(agent, b, rng);
  EXPECT_NEAR(l.loss, 0.0, 1e-24);
  for (const auto& g : l.grads) EXPECT_NEAR(g.norm(), 0.0, 1e-12);
}

TEST(Critic, LossMatchesHandComputedMse) {
  Rng rng(7);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  auto b = random_batch(3, 2, 2, rng);
  Rng r = rng;
  const auto l = critic_loss(agent, b, r);
  const MatD x = critic_input<double>(b.obs, b.action);
  double s = 0;
  for (auto& n : agent.params.critics) {
    const MatD q = n.forward_eval(x);
    for (int j = 0; j < 2; ++j) s += (q(0, j) - l.targets[j]) * (q(0, j) - l.targets[j]);
  }
  EXPECT_NEAR(l.loss, s / 4, 1e-12);
}

TEST(Critic, UpdateReducesLossOnSingleTransition) {
  Rng rng(8);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  auto b = random_batch(3, 2, 1, rng);
  Rng r = rng;
  Rng r_before = r;
  const double before = critic_update(agent, b, r);
  const double after = critic_loss(agent, b, r_before).loss;  // same next actions, same targets
  EXPECT_LT(after, before);
  EXPECT_EQ(agent.counters.critic_updates, 1);
}

namespace {

// FD oracle for critic_loss: targets and next actions held fixed.
void check_critic_gradients(Algo algo, unsigned seed) {
  Rng rng(seed);
  auto v = small(algo);
  v.hidden = {8, 8};
  auto agent = Agent<double>::create(v, 3, 2, rng);
  agent.params.log_temperature = std::log(0.2);
  for (auto& c : agent.params.critics) c.params() += 0.2 * nn::standard_normal<double>(c.params().size(), 1, rng).col(0);
  auto b = random_batch(3, 2, 6, rng);
  Rng r = rng, r_next = rng;
  const auto l = critic_loss(agent, b, r);
  const auto next = sample_policy(agent, b.next_obs, r_next);

  for (std::size_t i = 0; i < agent.params.critics.size(); ++i) {
    auto f = [&](const Eigen::VectorXd& p) {
      auto nets = agent.params.critics;
      nets[i].params() = p;
      MatD q;
      if (v.use_batchnorm_joint && !v.use_target_nets) {
        q = joint_critic_forward<double>(nets, b, next.action).leftCols(6);
        q = q.row(i);
      } else {
        q = nets[i].forward(critic_input<double>(b.obs, b.action), nn::Mode::kTrain);
      }
      return (q.row(0).transpose() - l.targets).squaredNorm() / 6.0;
    };
    const auto fd = oracle::fd_gradient(f, agent.params.critics[i].params());
    EXPECT_LT(oracle::rel_error(l.grads[i], fd), 1e-4) << "critic " << i << " seed " << seed;
  }
}

}  // namespace

TEST(CriticGradients, CrossQThroughJointBatchStatistics) {
  for (unsigned s = 0; s < 20; ++s) check_critic_gradients(Algo::kCrossQ, 600 + s);
}

TEST(CriticGradients, SacSeparateTargets) {
  for (unsigned s = 0; s < 20; ++s) check_critic_gradients(Algo::kSac, 700 + s);
}

// -- actor ---------------------------------------------------------------------

namespace {

void check_actor_gradients(Algo algo, unsigned seed) {
  Rng rng(seed);
  auto v = small(algo);
  v.hidden = {8, 8};
  auto agent = Agent<double>::create(v, 3, 2, rng);
  agent.params.log_temperature = std::log(0.5);
  agent.params.actor.params() += 0.3 * nn::standard_normal<double>(agent.params.actor.params().size(), 1, rng).col(0);
  for (auto& c : agent.params.critics) c.params() += 0.2 * nn::standard_normal<double>(c.params().size(), 1, rng).col(0);
  auto b = random_batch(3, 2, 5, rng);
  Rng r = rng, r_noise = rng;
  const auto l = actor_loss(agent, b, r);
  const MatD noise = nn::standard_normal<double>(2, 5, r_noise);
  auto f = [&](const Eigen::VectorXd& p) {
    auto actor = agent.params.actor;
    actor.params() = p;
    const auto s = nn::squashed_batch<double>(actor.forward_eval(b.obs), noise);
    const MatD x = critic_input<double>(b.obs, s.action);
    VecD qmin = VecD::Constant(5, INFINITY);
    for (const auto& c : agent.params.critics) qmin = qmin.cwiseMin(VecD(c.forward_eval(x).row(0).transpose()));
    return (0.5 * s.log_prob - qmin).mean();
  };
  EXPECT_LT(oracle::rel_error(l.grad, oracle::fd_gradient(f, agent.params.actor.params())), 1e-4) << "seed " << seed;
}

}  // namespace

TEST(ActorGradients, CrossQEvalModeCritics) {
  for (unsigned s = 0; s < 20; ++s) check_actor_gradients(Algo::kCrossQ, 800 + s);
}

TEST(ActorGradients, Sac) {
  for (unsigned s = 0; s < 20; ++s) check_actor_gradients(Algo::kSac, 900 + s);
}

TEST(Actor, FlatObjectiveGivesZeroGradient) {
  Rng rng(9);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  for (auto& c : agent.params.critics) make_constant(c, 4.0);
  agent.params.log_temperature = -1000.0;
  auto b = random_batch(3, 2, 8, rng);
  EXPECT_LT(actor_loss(agent, b, rng).grad.norm(), 1e-12);
}

TEST(Actor, MovesTowardCriticPeak) {
  // Q(o, a) = -|a - 0.3| built from two ReLU hinges
  Rng rng(10);
  auto v = small(Algo::kSac);
  v.hidden = {2, 2};
  v.learning_rate = 0.01;
  auto agent = Agent<double>::create(v, 1, 1, rng);
  agent.params.log_temperature = -1000.0;
  for (auto& c : agent.params.critics) {
    c.params().setZero();
    c.weights(0) << 0, 1, 0, -1;  // inputs (o, a)
    c.bias(0) << -0.3, 0.3;
    c.weights(1) << 1, 0, 0, 1;
    c.weights(2) << -1, -1;
  }
  Batch<double> b;
  b.obs = MatD::Constant(1, 32, 1.0);
  b.action = MatD::Zero(1, 32);
  b.reward = VecD::Zero(32);
  b.next_obs = b.obs;
  b.terminal = VecD::Zero(32);
  auto mean_action = [&] { return std::tanh(agent.params.actor.forward_eval(MatD::Constant(1, 1, 1.0))(0, 0)); };
  const double d0 = std::abs(mean_action() - 0.3);
  double prev = d0;
  int closer = 0;
  for (int k = 0; k < 10; ++k) {
    for (int j = 0; j < 20; ++j) actor_update(agent, b, rng);
    const double d = std::abs(mean_action() - 0.3);
    if (d <= prev + 1e-3) ++closer;
    prev = d;
  }
  EXPECT_LT(prev, 0.05);
  EXPECT_LT(prev, d0);
  EXPECT_GE(closer, 9);
}

TEST(Actor, EntropyTermRaisesLogStd) {
  Rng rng(11);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  for (auto& c : agent.params.critics) make_constant(c, 0.0);
  agent.params.log_temperature = 0.0;
  // start narrow: the squashed entropy stops growing near unit std
  auto& actor = agent.params.actor;
  const int last = actor.num_layers() - 1;
  actor.weights(last).bottomRows(2).setZero();
  actor.bias(last).tail(2).setConstant(-2.0);
  auto b = random_batch(3, 2, 32, rng);
  auto log_std = [&] { return agent.params.actor.forward_eval(b.obs).bottomRows(2).mean(); };
  const double before = log_std();
  for (int k = 0; k < 50; ++k) actor_update(agent, b, rng);
  EXPECT_GT(log_std(), before);
}

// -- temperature -----------------------------------------------------------------

TEST(Temperature, GradientSigns) {
  Rng rng(12);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  EXPECT_EQ(temperature_grad<double>(agent, VecD::Constant(4, 2.0)), 0.0);  // entropy exactly at target

  auto low = agent;  // log pi above act_dim: entropy below target
  temperature_update<double>(low, VecD::Constant(4, 5.0));
  EXPECT_GT(low.temperature(), agent.temperature());

  auto high = agent;
  temperature_update<double>(high, VecD::Constant(4, -3.0));
  EXPECT_LT(high.temperature(), agent.temperature());
  EXPECT_EQ(high.counters.temperature_updates, 1);
}

TEST(Temperature, GradientMatchesFiniteDifference) {
  Rng rng(13);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  for (int k = 0; k < 20; ++k) {
    const VecD lp = nn::standard_normal<double>(7, 1, rng).col(0) * 3.0;
    auto f = [&](const Eigen::VectorXd& la) { return -la[0] * (lp.array() + agent.target_entropy).mean(); };
    const auto fd = oracle::fd_gradient(f, VecD::Constant(1, agent.params.log_temperature));
    EXPECT_NEAR(temperature_grad(agent, lp), fd[0], 1e-8);
  }
}

// -- polyak ------------------------------------------------------------------------

TEST(Polyak, Limits) {
  Rng rng(14);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  auto online = agent.params.critics[0];
  auto target = agent.params.target_critics[0];
  online.params().setConstant(1.0);
  target.params().setZero();
  auto t1 = target;
  polyak_update<double>(online, t1, 1.0);
  EXPECT_EQ(t1.params(), online.params());
  auto t0 = target;
  polyak_update<double>(online, t0, 0.0);
  EXPECT_EQ(t0.params(), target.params());
  polyak_update<double>(online, target, 0.005);
  EXPECT_NEAR(target.params()[0], 0.005, 1e-15);
}

TEST(Polyak, CrossQRejected) {
  Rng rng(15);
  auto agent = Agent<double>::create(small(Algo::kCrossQ), 3, 2, rng);
  EXPECT_THROW(polyak_update(agent), ConfigError);
}

// -- train_step ----------------------------------------------------------------------

namespace {

ReplayBuffer<double> filled_buffer(int n, Rng& rng) {
  ReplayBuffer<double> buf(n, 3, 2);
  for (int i = 0; i < n; ++i) {
    buf.push({nn::standard_normal<double>(3, 1, rng).col(0), nn::standard_normal<double>(2, 1, rng).col(0).array().tanh(),
              0.1 * i, nn::standard_normal<double>(3, 1, rng).col(0), i % 17 == 0});
  }
  return buf;
}

}  // namespace

TEST(TrainStep, UtdCounters) {
  Rng rng(16);
  auto buf = filled_buffer(300, rng);
  for (auto [algo, utd] : {std::pair{Algo::kSac, 20}, std::pair{Algo::kCrossQ, 0}, std::pair{Algo::kSac, 1}}) {
    auto v = small(algo, utd);
    v.learning_starts = 100;
    v.batch_size = 16;
    auto agent = Agent<double>::create(v, 3, 2, rng);
    for (int k = 1; k <= 3; ++k) {
      const auto m = train_step(agent, buf, rng);
      EXPECT_TRUE(m.updated);
      EXPECT_EQ(agent.counters.critic_updates, k * v.utd);
      EXPECT_EQ(agent.counters.actor_updates, k);
      EXPECT_EQ(agent.counters.temperature_updates, k);
    }
  }
}

TEST(TrainStep, BelowLearningStartsIsNoOp) {
  Rng rng(17);
  auto buf = filled_buffer(50, rng);
  auto v = small(Algo::kCrossQ);
  v.learning_starts = 100;
  auto agent = Agent<double>::create(v, 3, 2, rng);
  const auto before = agent;
  const auto m = train_step(agent, buf, rng);
  EXPECT_FALSE(m.updated);
  EXPECT_EQ(agent.params.actor.params(), before.params.actor.params());
  EXPECT_EQ(agent.params.critics[0].params(), before.params.critics[0].params());
  EXPECT_EQ(agent.counters.critic_updates, 0);
}

TEST(TrainStep, Deterministic) {
  Rng r0(18);
  auto buf = filled_buffer(200, r0);
  auto run = [&] {
    Rng rng(19);
    auto v = small(Algo::kDroq);
    v.learning_starts = 50;
    v.batch_size = 16;
    v.utd = 20;
    auto agent = Agent<double>::create(v, 3, 2, rng);
    for (int k = 0; k < 3; ++k) train_step(agent, buf, rng);
    return agent;
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.params.actor.params(), b.params.actor.params());
  EXPECT_EQ(a.params.critics[1].params(), b.params.critics[1].params());
}

TEST(TrainStep, NonFiniteLossAbortsWithoutChangingTheAgent) {
  Rng rng(20);
  auto buf = filled_buffer(200, rng);
  auto v = small(Algo::kSac);
  v.learning_starts = 10;
  auto agent = Agent<double>::create(v, 3, 2, rng);
  agent.params.target_critics[0].params()[0] = NAN;
  const auto before = agent.params.critics[0].params();
  EXPECT_THROW(train_step(agent, buf, rng), NumericError);
  EXPECT_EQ(agent.params.critics[0].params(), before);
}

// -- act -------------------------------------------------------------------------------

TEST(Act, ZeroActorGivesZero) {
  Rng rng(21);
  auto agent = Agent<double>::create(small(Algo::kCrossQ), 3, 2, rng);
  agent.params.actor.params().setZero();
  const VecD a = act<double>(agent, VecD::Ones(3), ActMode::kDeterministic, VecD::Zero(2));
  EXPECT_EQ(a.norm(), 0.0);
}

TEST(Act, ExploreWithZeroNoiseIsDeterministic) {
  Rng rng(22);
  auto agent = Agent<double>::create(small(Algo::kCrossQ), 3, 2, rng);
  agent.params.actor.params() += nn::standard_normal<double>(agent.params.actor.params().size(), 1, rng).col(0);
  const VecD o = nn::standard_normal<double>(3, 1, rng).col(0);
  EXPECT_EQ(act<double>(agent, o, ActMode::kExplore, VecD::Zero(2)), act<double>(agent, o, ActMode::kDeterministic, VecD::Zero(2)));
}

TEST(Act, DrawsStayInsideTheBox) {
  Rng rng(23);
  auto agent = Agent<double>::create(small(Algo::kSac), 3, 2, rng);
  agent.params.actor.params() += 2.0 * nn::standard_normal<double>(agent.params.actor.params().size(), 1, rng).col(0);
  for (int k = 0; k < 10000; ++k) {
    const VecD a = act<double>(agent, VecD(nn::standard_normal<double>(3, 1, rng).col(0)), ActMode::kExplore,
                       VecD(nn::standard_normal<double>(2, 1, rng).col(0)), 0.4);
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 0.4);
  }
}
