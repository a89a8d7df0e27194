#include "quadlearn/rl.hpp"

#include <algorithm>
#include <iterator>
#include <limits>
#include <numeric>

#include "quadlearn/errors.hpp"

namespace quadlearn::rl {

std::string to_string(Algo a) {
  switch (a) {
    case Algo::kSac: return "sac";
    case Algo::kCrossQ: return "crossq";
    case Algo::kRedq: return "redq";
    case Algo::kDroq: return "droq";
  }
  return "unknown";
}

Algo parse_algo(std::string_view name) {
  if (name == "sac") return Algo::kSac;
  if (name == "crossq") return Algo::kCrossQ;
  if (name == "redq") return Algo::kRedq;
  if (name == "droq") return Algo::kDroq;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

AlgoVariant AlgoVariant::preset(Algo name, int utd) {
  AlgoVariant v;
  v.name = name;
  switch (name) {
    case Algo::kCrossQ:
      v.utd = 1;
      v.learning_rate = 0.005;
      v.batch_size = 128;
      v.use_target_nets = false;
      v.use_batchnorm_joint = true;
      break;
    case Algo::kSac:
      v.utd = 1;
      v.learning_rate = 0.003;
      v.batch_size = 256;
      v.use_target_nets = true;
      v.use_batchnorm_joint = false;
      break;
    case Algo::kRedq:
      v.utd = 20;
      v.learning_rate = 0.0003;
      v.batch_size = 256;
      v.num_critics = 10;
      v.subset_size = 2;
      v.use_target_nets = true;
      v.use_batchnorm_joint = false;
      break;
    case Algo::kDroq:
      v.utd = 20;
      v.learning_rate = 0.001;
      v.batch_size = 256;
      v.dropout_rate = 0.01;
      v.use_layernorm = true;
      v.use_target_nets = true;
      v.use_batchnorm_joint = false;
      break;
  }
  if (utd > 0) v.utd = utd;
  v.validate();
  return v;
}

void AlgoVariant::validate() const {
  auto fail = [&](const std::string& why) {
    throw ConfigError("invalid " + to_string(name) + " variant: " + why);
  };
  if (utd < 1) fail("utd must be positive");
  if (num_critics < 1) fail("num_critics must be positive");
  if (subset_size < 1 || subset_size > num_critics) fail("subset_size must be in [1, num_critics]");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) fail("dropout_rate must be in [0, 1)");
  if (polyak_tau <= 0.0 || polyak_tau > 1.0) fail("polyak_tau must be in (0, 1]");
  if (learning_rate <= 0.0) fail("learning_rate must be positive");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (gamma <= 0.0 || gamma > 1.0) fail("gamma must be in (0, 1]");
  if (hidden.empty()) fail("need at least one hidden layer");
  if (learning_starts < 0) fail("learning_starts must be nonnegative");
  if (actor_updates_per_step < 0) fail("actor_updates_per_step must be nonnegative");
  if (use_batchnorm_joint && use_layernorm) fail("batch and layer norm are exclusive");
  switch (name) {
    case Algo::kCrossQ:
      if (use_target_nets) fail("crossq does not use target networks");
      if (!use_batchnorm_joint) fail("crossq needs joint batch normalization");
      if (utd != 1) fail("crossq runs at utd 1");
      break;
    case Algo::kSac:
      if (!use_target_nets) fail("sac needs target networks");
      break;
    case Algo::kRedq:
      if (num_critics != 10 || utd != 20) fail("redq uses 10 critics at utd 20");
      break;
    case Algo::kDroq:
      if (dropout_rate <= 0.0 || utd != 20) fail("droq needs dropout and utd 20");
      break;
  }
}

// ---------------------------------------------------------------------------
// Replay buffer

template <typename T>
ReplayBuffer<T>::ReplayBuffer(int capacity, int obs_dim, int act_dim)
    : capacity_(capacity) {
  if (capacity <= 0 || obs_dim <= 0 || act_dim <= 0) {
    throw ConfigError("ReplayBuffer: capacity and dimensions must be positive");
  }
  obs_.resize(obs_dim, 0);
  action_.resize(act_dim, 0);
  next_obs_.resize(obs_dim, 0);
}

template <typename T>
void ReplayBuffer<T>::reserve(int n) {
  n = std::min(n, capacity_);
  if (n <= allocated()) return;
  obs_.conservativeResize(Eigen::NoChange, n);
  action_.conservativeResize(Eigen::NoChange, n);
  reward_.conservativeResize(n);
  next_obs_.conservativeResize(Eigen::NoChange, n);
  terminal_.conservativeResize(n);
}

template <typename T>
void ReplayBuffer<T>::push(const Transition<T>& t) {
  if (t.obs.size() != obs_.rows() || t.next_obs.size() != obs_.rows() ||
      t.action.size() != action_.rows()) {
    throw ConfigError("ReplayBuffer::push: transition dimensions do not match the buffer");
  }
  if (write_ >= allocated()) reserve(std::max(4096, 2 * allocated()));
  obs_.col(write_) = t.obs;
  action_.col(write_) = t.action;
  reward_[write_] = t.reward;
  next_obs_.col(write_) = t.next_obs;
  terminal_[write_] = t.terminal ? T(1) : T(0);
  write_ = (write_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

template <typename T>
Batch<T> ReplayBuffer<T>::gather(const std::vector<int>& slots) const {
  const auto n = static_cast<Eigen::Index>(slots.size());
  Batch<T> b;
  b.obs.resize(obs_.rows(), n);
  b.action.resize(action_.rows(), n);
  b.reward.resize(n);
  b.next_obs.resize(obs_.rows(), n);
  b.terminal.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int s = slots[j];
    b.obs.col(j) = obs_.col(s);
    b.action.col(j) = action_.col(s);
    b.reward[j] = reward_[s];
    b.next_obs.col(j) = next_obs_.col(s);
    b.terminal[j] = terminal_[s];
  }
  return b;
}

template <typename T>
Batch<T> ReplayBuffer<T>::sample(int batch_size, Rng& rng) const {
  if (size_ == 0) throw InputError("ReplayBuffer::sample: buffer is empty");
  std::uniform_int_distribution<int> pick(0, size_ - 1);
  std::vector<int> slots(batch_size);
  for (int& s : slots) s = pick(rng);
  return gather(slots);
}

template <typename T>
Transition<T> ReplayBuffer<T>::at(int i) const {
  if (i < 0 || i >= size_) throw InputError("ReplayBuffer::at: index out of range");
  const int oldest = size_ < capacity_ ? 0 : write_;
  const int s = (oldest + i) % capacity_;
  return {obs_.col(s), action_.col(s), reward_[s], next_obs_.col(s), terminal_[s] > T(0)};
}

// ---------------------------------------------------------------------------
// Agent

template <typename T>
nn::MlpSpec Agent<T>::actor_spec() const {
  nn::MlpSpec s;
  s.sizes.push_back(obs_dim);
  s.sizes.insert(s.sizes.end(), variant.hidden.begin(), variant.hidden.end());
  s.sizes.push_back(2 * act_dim);
  s.output_gain = 0.01;
  return s;
}

template <typename T>
nn::MlpSpec Agent<T>::critic_spec() const {
  nn::MlpSpec s;
  s.sizes.push_back(obs_dim + act_dim);
  s.sizes.insert(s.sizes.end(), variant.hidden.begin(), variant.hidden.end());
  s.sizes.push_back(1);
  s.norm = variant.use_batchnorm_joint ? nn::Norm::kBatch
           : variant.use_layernorm     ? nn::Norm::kLayer
                                       : nn::Norm::kNone;
  s.dropout = variant.dropout_rate;
  s.bn_momentum = variant.bn_momentum;
  return s;
}

template <typename T>
Agent<T> Agent<T>::create(const AlgoVariant& variant, int obs_dim, int act_dim, Rng& rng) {
  variant.validate();
  if (obs_dim <= 0 || act_dim <= 0) throw ConfigError("Agent: dimensions must be positive");
  Agent a;
  a.variant = variant;
  a.obs_dim = obs_dim;
  a.act_dim = act_dim;
  a.target_entropy = -static_cast<T>(act_dim);
  const T lr = static_cast<T>(variant.learning_rate);
  a.params.actor = nn::Mlp<T>(a.actor_spec(), rng);
  a.params.actor_opt = nn::AdamState<T>::zeros(a.params.actor.params().size(), lr);
  for (int i = 0; i < variant.num_critics; ++i) {
    a.params.critics.emplace_back(a.critic_spec(), rng);
    a.params.critic_opts.push_back(nn::AdamState<T>::zeros(a.params.critics.back().params().size(), lr));
  }
  if (variant.use_target_nets) a.params.target_critics = a.params.critics;
  a.params.log_temperature = static_cast<T>(std::log(variant.initial_temperature));
  a.params.temperature_opt = nn::AdamState<T>::zeros(1, lr);
  return a;
}

template <typename T>
Matrix<T> critic_input(const Matrix<T>& obs, const Matrix<T>& action) {
  Matrix<T> x(obs.rows() + action.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(action.rows()) = action;
  return x;
}

template <typename T>
PolicySample<T> sample_policy(const Agent<T>& agent, const Matrix<T>& obs, Rng& rng) {
  const Matrix<T> raw = agent.params.actor.forward_eval(obs);
  const Matrix<T> noise = nn::standard_normal<T>(agent.act_dim, obs.cols(), rng);
  auto s = nn::squashed_batch<T>(raw, noise);
  return {std::move(s.action), std::move(s.log_prob)};
}

template <typename T>
Matrix<T> joint_critic_forward(std::vector<nn::Mlp<T>>& critics, const Batch<T>& batch,
                               const Matrix<T>& next_action,
                               std::vector<typename nn::Mlp<T>::Tape>* tapes) {
  const Eigen::Index b = batch.size();
  Matrix<T> joint(batch.obs.rows() + batch.action.rows(), 2 * b);
  joint.leftCols(b) = critic_input<T>(batch.obs, batch.action);
  joint.rightCols(b) = critic_input<T>(batch.next_obs, next_action);
  Matrix<T> q(critics.size(), 2 * b);
  if (tapes) tapes->resize(critics.size());
  for (std::size_t i = 0; i < critics.size(); ++i) {
    q.row(i) = critics[i].forward(joint, nn::Mode::kTrain, tapes ? &(*tapes)[i] : nullptr);
  }
  return q;
}

namespace {

template <typename T>
std::vector<int> target_subset(const AlgoVariant& v, Rng& rng) {
  std::vector<int> all(v.num_critics);
  std::iota(all.begin(), all.end(), 0);
  if (v.subset_size >= v.num_critics) return all;
  std::vector<int> picked;
  std::sample(all.begin(), all.end(), std::back_inserter(picked), v.subset_size, rng);
  return picked;
}

template <typename T>
Vector<T> soft_targets(const Batch<T>& batch, const Vector<T>& min_q_next,
                       const Vector<T>& next_log_prob, T alpha, T gamma) {
  const Vector<T> soft_v = min_q_next - alpha * next_log_prob;
  return batch.reward.array() +
         gamma * (T(1) - batch.terminal.array()) * soft_v.array();
}

// Bellman targets from target (or online, when there are none) critics in the
// configured train/eval mode. Non-CrossQ path.
template <typename T>
Vector<T> separate_targets(std::vector<nn::Mlp<T>>& nets, const AlgoVariant& v,
                           const Batch<T>& batch, const PolicySample<T>& next, T alpha,
                           Rng& rng) {
  const Matrix<T> x_next = critic_input<T>(batch.next_obs, next.action);
  const auto subset = target_subset<T>(v, rng);
  Vector<T> min_q = Vector<T>::Constant(batch.size(), std::numeric_limits<T>::infinity());
  for (int i : subset) {
    const Matrix<T> q = v.dropout_rate > 0.0 ? nets[i].forward(x_next, nn::Mode::kTrain, nullptr, &rng)
                                             : nets[i].forward_eval(x_next);
    min_q = min_q.cwiseMin(q.row(0).transpose());
  }
  return soft_targets<T>(batch, min_q, next.log_prob, alpha, static_cast<T>(v.gamma));
}

template <typename T>
Vector<T> min_rows(const Matrix<T>& q, const std::vector<int>& rows, Eigen::Index from,
                   Eigen::Index count) {
  Vector<T> m = Vector<T>::Constant(count, std::numeric_limits<T>::infinity());
  for (int r : rows) m = m.cwiseMin(q.row(r).segment(from, count).transpose());
  return m;
}

}  // namespace

template <typename T>
Vector<T> critic_targets(const Batch<T>& batch, const Agent<T>& agent, Rng& rng) {
  if (batch.size() == 0) throw InputError("critic_targets: empty batch");
  const auto next = sample_policy(agent, batch.next_obs, rng);
  const T alpha = agent.temperature();
  if (agent.variant.use_target_nets) {
    auto nets = agent.params.target_critics;
    return separate_targets<T>(nets, agent.variant, batch, next, alpha, rng);
  }
  if (agent.variant.use_batchnorm_joint) {
    auto critics = agent.params.critics;
    const Matrix<T> q = joint_critic_forward<T>(critics, batch, next.action);
    const auto subset = target_subset<T>(agent.variant, rng);
    return soft_targets<T>(batch, min_rows<T>(q, subset, batch.size(), batch.size()), next.log_prob,
                           alpha, static_cast<T>(agent.variant.gamma));
  }
  auto nets = agent.params.critics;
  return separate_targets<T>(nets, agent.variant, batch, next, alpha, rng);
}

template <typename T>
CriticLoss<T> critic_loss(const Agent<T>& agent, const Batch<T>& batch, Rng& rng) {
  const Eigen::Index b = batch.size();
  if (b == 0) throw InputError("critic_loss: empty batch");
  const AlgoVariant& v = agent.variant;
  const auto next = sample_policy(agent, batch.next_obs, rng);
  const T alpha = agent.temperature();

  CriticLoss<T> out;
  out.critics = agent.params.critics;
  auto& nets = out.critics;
  std::vector<typename nn::Mlp<T>::Tape> tapes(nets.size());
  Matrix<T> q_current(nets.size(), b);
  if (v.use_batchnorm_joint && !v.use_target_nets) {
    // current and next halves share one train-mode pass; only the current half gets gradient
    const Matrix<T> q = joint_critic_forward<T>(nets, batch, next.action, &tapes);
    q_current = q.leftCols(b);
    const auto subset = target_subset<T>(v, rng);
    out.targets = soft_targets<T>(batch, min_rows<T>(q, subset, b, b), next.log_prob, alpha,
                                  static_cast<T>(v.gamma));
  } else {
    auto target_nets = v.use_target_nets ? agent.params.target_critics : agent.params.critics;
    out.targets = separate_targets<T>(target_nets, v, batch, next, alpha, rng);
    const Matrix<T> x = critic_input<T>(batch.obs, batch.action);
    for (std::size_t i = 0; i < nets.size(); ++i) {
      q_current.row(i) = nets[i].forward(x, nn::Mode::kTrain, &tapes[i], &rng);
    }
  }

  const Matrix<T> err = q_current.rowwise() - out.targets.transpose();
  out.loss = err.array().square().sum() / static_cast<T>(b * nets.size());
  if (!std::isfinite(static_cast<double>(out.loss))) {
    throw NumericError("non-finite critic loss", "critic_update");
  }

  // each critic's own term is mean((q_i - y)^2); the reported loss averages them
  const Eigen::Index cols = tapes.front().inputs.front().cols();
  out.grads.resize(nets.size());
  for (std::size_t i = 0; i < nets.size(); ++i) {
    Matrix<T> d_q = Matrix<T>::Zero(1, cols);
    d_q.leftCols(b) = err.row(i) * (T(2) / static_cast<T>(b));
    out.grads[i] = Vector<T>::Zero(nets[i].params().size());
    nets[i].backward(tapes[i], d_q, &out.grads[i]);
  }
  return out;
}

template <typename T>
T critic_update(Agent<T>& agent, const Batch<T>& batch, Rng& rng) {
  CriticLoss<T> c = critic_loss(agent, batch, rng);
  for (std::size_t i = 0; i < c.critics.size(); ++i) {
    nn::adam_step<T>(c.critics[i].params(), c.grads[i], agent.params.critic_opts[i]);
  }
  agent.params.critics = std::move(c.critics);
  agent.counters.critic_updates += 1;
  return c.loss;
}

template <typename T>
ActorLoss<T> actor_loss(const Agent<T>& agent, const Batch<T>& batch, Rng& rng) {
  const Eigen::Index b = batch.size();
  if (b == 0) throw InputError("actor_loss: empty batch");
  nn::Mlp<T> actor = agent.params.actor;
  typename nn::Mlp<T>::Tape actor_tape;
  const Matrix<T> raw = actor.forward(batch.obs, nn::Mode::kTrain, &actor_tape);
  const Matrix<T> noise = nn::standard_normal<T>(agent.act_dim, b, rng);
  const auto s = nn::squashed_batch<T>(raw, noise);

  const Matrix<T> x = critic_input<T>(batch.obs, s.action);
  const auto& critics = agent.params.critics;
  const auto subset = target_subset<T>(agent.variant, rng);
  const auto k = static_cast<Eigen::Index>(subset.size());
  std::vector<typename nn::Mlp<T>::Tape> tapes(subset.size());
  Matrix<T> q(k, b);
  for (Eigen::Index i = 0; i < k; ++i) q.row(i) = critics[subset[i]].forward_eval(x, &tapes[i]);

  Vector<T> q_pi(b);
  Matrix<T> d_q = Matrix<T>::Zero(k, b);
  const T inv_b = T(1) / static_cast<T>(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    Eigen::Index arg = 0;
    q_pi[j] = q.col(j).minCoeff(&arg);
    d_q(arg, j) = -inv_b;
  }
  const T alpha = agent.temperature();
  ActorLoss<T> out;
  out.loss = (alpha * s.log_prob - q_pi).mean();
  if (!std::isfinite(static_cast<double>(out.loss))) {
    throw NumericError("non-finite actor loss", "actor_update");
  }

  Matrix<T> d_action = Matrix<T>::Zero(agent.act_dim, b);
  for (Eigen::Index i = 0; i < k; ++i) {
    d_action += critics[subset[i]].backward(tapes[i], d_q.row(i), nullptr).bottomRows(agent.act_dim);
  }
  const Vector<T> d_log_prob = Vector<T>::Constant(b, alpha * inv_b);
  const Matrix<T> d_raw = nn::squashed_batch_backward<T>(s, d_action, d_log_prob);
  out.grad = Vector<T>::Zero(actor.params().size());
  actor.backward(actor_tape, d_raw, &out.grad);
  out.log_prob = s.log_prob;
  return out;
}

template <typename T>
ActorUpdateResult<T> actor_update(Agent<T>& agent, const Batch<T>& batch, Rng& rng) {
  ActorLoss<T> a = actor_loss(agent, batch, rng);
  nn::adam_step<T>(agent.params.actor.params(), a.grad, agent.params.actor_opt);
  agent.counters.actor_updates += 1;
  return {a.loss, std::move(a.log_prob)};
}

template <typename T>
T temperature_grad(const Agent<T>& agent, const Vector<T>& log_prob) {
  // d/dlog_alpha of -log_alpha * mean(log_pi + target_entropy)
  return -(log_prob.array() + agent.target_entropy).mean();
}

template <typename T>
void temperature_update(Agent<T>& agent, const Vector<T>& log_prob) {
  Vector<T> grad(1);
  grad[0] = temperature_grad(agent, log_prob);
  Vector<T> param(1);
  param[0] = agent.params.log_temperature;
  nn::adam_step<T>(param, grad, agent.params.temperature_opt);
  agent.params.log_temperature = param[0];
  agent.counters.temperature_updates += 1;
}

template <typename T>
void temperature_update(Agent<T>& agent, const Batch<T>& batch, Rng& rng) {
  temperature_update(agent, sample_policy(agent, batch.obs, rng).log_prob);
}

template <typename T>
void polyak_update(const nn::Mlp<T>& online, nn::Mlp<T>& target, T tau) {
  if (online.params().size() != target.params().size()) {
    throw ConfigError("polyak_update: network shapes differ");
  }
  target.params() = (T(1) - tau) * target.params() + tau * online.params();
}

template <typename T>
void polyak_update(Agent<T>& agent) {
  if (!agent.variant.use_target_nets) {
    throw ConfigError("polyak_update: " + to_string(agent.variant.name) + " has no target networks");
  }
  const T tau = static_cast<T>(agent.variant.polyak_tau);
  for (std::size_t i = 0; i < agent.params.critics.size(); ++i) {
    polyak_update<T>(agent.params.critics[i], agent.params.target_critics[i], tau);
  }
}

template <typename T>
TrainStepMetrics<T> train_step(Agent<T>& agent, const ReplayBuffer<T>& buffer, Rng& rng) {
  TrainStepMetrics<T> m;
  const AlgoVariant& v = agent.variant;
  if (buffer.size() < std::max(1, v.learning_starts)) return m;
  m.updated = true;
  for (int u = 0; u < v.utd; ++u) {
    const auto batch = buffer.sample(v.batch_size, rng);
    m.critic_loss = critic_update(agent, batch, rng);
    if (v.use_target_nets) polyak_update(agent);
  }
  for (int k = 0; k < v.actor_updates_per_step; ++k) {
    const auto batch = buffer.sample(v.batch_size, rng);
    const auto r = actor_update(agent, batch, rng);
    m.actor_loss = r.loss;
    m.mean_log_prob = r.log_prob.mean();
    temperature_update(agent, r.log_prob);
  }
  m.temperature = agent.temperature();
  return m;
}

template <typename T>
Vector<T> act(const Agent<T>& agent, const Vector<T>& obs, ActMode mode, const Vector<T>& noise,
              T bound) {
  if (obs.size() != agent.obs_dim) throw ConfigError("act: observation dimension mismatch");
  const Matrix<T> raw = agent.params.actor.forward_eval(obs);
  const auto head = nn::SquashedGaussianHead<T>::from_raw(raw.col(0).head(agent.act_dim),
                                                          raw.col(0).tail(agent.act_dim));
  const Vector<T> zero = Vector<T>::Zero(agent.act_dim);
  const Vector<T>& eps = mode == ActMode::kExplore ? noise : zero;
  if (eps.size() != agent.act_dim) throw ConfigError("act: noise dimension mismatch");
  return nn::squashed_sample<T>(head, eps).action * bound;
}

#define QUADLEARN_RL_INSTANTIATE(T)                                                            \
  template class ReplayBuffer<T>;                                                              \
  template struct Agent<T>;                                                                    \
  template Matrix<T> critic_input<T>(const Matrix<T>&, const Matrix<T>&);                      \
  template PolicySample<T> sample_policy<T>(const Agent<T>&, const Matrix<T>&, Rng&);          \
  template Matrix<T> joint_critic_forward<T>(std::vector<nn::Mlp<T>>&, const Batch<T>&,        \
                                             const Matrix<T>&,                                 \
                                             std::vector<typename nn::Mlp<T>::Tape>*);         \
  template Vector<T> critic_targets<T>(const Batch<T>&, const Agent<T>&, Rng&);                \
  template CriticLoss<T> critic_loss<T>(const Agent<T>&, const Batch<T>&, Rng&);                \
  template T critic_update<T>(Agent<T>&, const Batch<T>&, Rng&);                               \
  template ActorLoss<T> actor_loss<T>(const Agent<T>&, const Batch<T>&, Rng&);                  \
  template T temperature_grad<T>(const Agent<T>&, const Vector<T>&);                           \
  template ActorUpdateResult<T> actor_update<T>(Agent<T>&, const Batch<T>&, Rng&);             \
  template void temperature_update<T>(Agent<T>&, const Vector<T>&);                            \
  template void temperature_update<T>(Agent<T>&, const Batch<T>&, Rng&);                       \
  template void polyak_update<T>(const nn::Mlp<T>&, nn::Mlp<T>&, T);                           \
  template void polyak_update<T>(Agent<T>&);                                                   \
  template TrainStepMetrics<T> train_step<T>(Agent<T>&, const ReplayBuffer<T>&, Rng&);         \
  template Vector<T> act<T>(const Agent<T>&, const Vector<T>&, ActMode, const Vector<T>&, T);

QUADLEARN_RL_INSTANTIATE(float)
QUADLEARN_RL_INSTANTIATE(double)

#undef QUADLEARN_RL_INSTANTIATE

}  // namespace quadlearn::rl
