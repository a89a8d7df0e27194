#include <benchmark/benchmark.h>

#include "quadlearn/env.hpp"
#include "quadlearn/nn.hpp"
#include "quadlearn/rl.hpp"
#include "quadlearn/sim.hpp"

using namespace quadlearn;

namespace {

void BM_MlpForward(benchmark::State& state) {
  nn::Rng rng(1);
  nn::MlpSpec spec;
  spec.sizes = {65, 256, 256, 1};
  spec.norm = nn::Norm::kBatch;
  nn::Mlp<float> net(spec, rng);
  const auto x = nn::standard_normal<float>(65, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, nn::Mode::kTrain));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(2)->Arg(256);

void BM_MlpForwardBackward(benchmark::State& state) {
  nn::Rng rng(2);
  nn::MlpSpec spec;
  spec.sizes = {65, 256, 256, 1};
  spec.norm = nn::Norm::kBatch;
  nn::Mlp<float> net(spec, rng);
  const auto x = nn::standard_normal<float>(65, 256, rng);
  const nn::Matrix<float> g = nn::Matrix<float>::Ones(1, 256);
  for (auto _ : state) benchmark::DoNotOptimize(nn::mlp_forward_backward<float>(net, x, g, nn::Mode::kTrain, &rng));
}
BENCHMARK(BM_MlpForwardBackward);

void BM_PhysicsStep(benchmark::State& state) {
  const sim::RobotModel model;
  const sim::ContactParams contact;
  sim::SimState s = sim::standing_state(model, contact);
  const sim::Vec12 cmd = model.nominal_q();
  for (auto _ : state) {
    s = sim::physics_step(s, cmd, model, contact, 0.0025);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_PhysicsStep);

void BM_EnvStep(benchmark::State& state) {
  LocomotionEnv env(EnvConfig{}, 3);
  env.reset();
  const Eigen::VectorXd a = Eigen::VectorXd::Zero(env.act_dim());
  for (auto _ : state) {
    const auto r = env.step(a);
    if (r.fallen || r.truncated) env.reset();
  }
}
BENCHMARK(BM_EnvStep);

void BM_TrainStep(benchmark::State& state) {
  const auto algo = static_cast<rl::Algo>(state.range(0));
  nn::Rng rng(4);
  auto v = rl::AlgoVariant::preset(algo);
  auto agent = rl::Agent<float>::create(v, 53, 12, rng);
  rl::ReplayBuffer<float> buffer(4096, 53, 12);
  for (int i = 0; i < 4096; ++i) {
    rl::Transition<float> t;
    t.obs = nn::standard_normal<float>(53, 1, rng).col(0);
    t.action = nn::standard_normal<float>(12, 1, rng).col(0).array().tanh();
    t.reward = 0.5f;
    t.next_obs = nn::standard_normal<float>(53, 1, rng).col(0);
    buffer.push(t);
  }
  for (auto _ : state) benchmark::DoNotOptimize(rl::train_step(agent, buffer, rng));
  state.SetLabel(state.range(0) == static_cast<int>(rl::Algo::kCrossQ) ? "crossq" : "sac");
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(rl::Algo::kCrossQ))
    ->Arg(static_cast<int>(rl::Algo::kSac))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
