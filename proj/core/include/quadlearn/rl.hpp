#pragma once

// Maximum-entropy off-policy learners. One Agent type covers SAC (with target
// critics), CrossQ (no targets, batch-normalized critics evaluated on a joint
// current/next batch), and the REDQ/DroQ ensemble and dropout variants.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "quadlearn/nn.hpp"

namespace quadlearn::rl {

using nn::Matrix;
using nn::Rng;
using nn::Vector;

enum class Algo { kSac, kCrossQ, kRedq, kDroq };

std::string to_string(Algo a);
/// Accepts "sac", "crossq", "redq", "droq". Throws ConfigError otherwise.
Algo parse_algo(std::string_view name);

struct AlgoVariant {
  Algo name = Algo::kCrossQ;
  int utd = 1;
  int num_critics = 2;
  int subset_size = 2;  // critics entering the min in the Bellman target
  double dropout_rate = 0.0;
  bool use_target_nets = false;
  bool use_batchnorm_joint = true;
  bool use_layernorm = false;
  double polyak_tau = 0.005;
  double learning_rate = 0.005;
  int batch_size = 128;
  double gamma = 0.99;
  std::vector<int> hidden = {256, 256};
  int learning_starts = 1000;
  int actor_updates_per_step = 1;
  double bn_momentum = 0.99;
  double initial_temperature = 1.0;

  /// Hyperparameter row for each algorithm. `utd` = 0 keeps the row's
  /// default (SAC accepts 1 or 20).
  static AlgoVariant preset(Algo name, int utd = 0);
  /// Throws ConfigError when the variant breaks its algorithm's invariants.
  void validate() const;
};

template <typename T>
struct Transition {
  Vector<T> obs;
  Vector<T> action;
  T reward = T(0);
  Vector<T> next_obs;
  bool terminal = false;  // falls only; time-limit truncation bootstraps
};

template <typename T>
struct Batch {
  Matrix<T> obs;       // obs_dim x B
  Matrix<T> action;    // act_dim x B
  Vector<T> reward;    // B
  Matrix<T> next_obs;  // obs_dim x B
  Vector<T> terminal;  // B, 1 for terminal
  Eigen::Index size() const { return reward.size(); }
};

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
template <typename T>
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(int capacity, int obs_dim, int act_dim);

  /// Throws ConfigError on a dimension mismatch.
  void push(const Transition<T>& t);
  Batch<T> sample(int batch_size, Rng& rng) const;
  Batch<T> gather(const std::vector<int>& slots) const;
  /// The i-th oldest stored transition.
  Transition<T> at(int i) const;

  int size() const { return size_; }
  int capacity() const { return capacity_; }
  int write_index() const { return write_; }
  int obs_dim() const { return static_cast<int>(obs_.rows()); }
  int act_dim() const { return static_cast<int>(action_.rows()); }

  /// Storage grows on demand up to the capacity.
  void reserve(int n);
  int allocated() const { return static_cast<int>(reward_.size()); }

  // Only the filled slots are written.
  template <class Archive>
  void save(Archive& ar) const {
    ar(capacity_, size_, write_);
    ar(Matrix<T>(obs_.leftCols(size_)), Matrix<T>(action_.leftCols(size_)), Vector<T>(reward_.head(size_)),
       Matrix<T>(next_obs_.leftCols(size_)), Vector<T>(terminal_.head(size_)));
  }
  template <class Archive>
  void load(Archive& ar) {
    ar(capacity_, size_, write_);
    ar(obs_, action_, reward_, next_obs_, terminal_);
  }

 private:
  int capacity_ = 0;
  int size_ = 0;
  int write_ = 0;
  Matrix<T> obs_, action_;
  Vector<T> reward_;
  Matrix<T> next_obs_;
  Vector<T> terminal_;
};

struct UpdateCounters {
  std::int64_t critic_updates = 0;
  std::int64_t actor_updates = 0;
  std::int64_t temperature_updates = 0;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(critic_updates, actor_updates, temperature_updates);
  }
};

template <typename T>
struct AgentParams {
  nn::Mlp<T> actor;  // obs -> [mean; raw log_std]
  nn::AdamState<T> actor_opt;
  std::vector<nn::Mlp<T>> critics;  // [obs; action] -> Q
  std::vector<nn::AdamState<T>> critic_opts;
  std::vector<nn::Mlp<T>> target_critics;  // empty unless use_target_nets
  T log_temperature = T(0);
  nn::AdamState<T> temperature_opt;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(actor, actor_opt, critics, critic_opts, target_critics, log_temperature, temperature_opt);
  }
};

template <typename T>
struct Agent {
  AlgoVariant variant;
  int obs_dim = 0;
  int act_dim = 0;
  T target_entropy = T(0);  // -act_dim
  AgentParams<T> params;
  UpdateCounters counters;

  static Agent create(const AlgoVariant& variant, int obs_dim, int act_dim, Rng& rng);
  T temperature() const { return std::exp(params.log_temperature); }
  nn::MlpSpec actor_spec() const;
  nn::MlpSpec critic_spec() const;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(params, counters);
  }
};

/// Fresh actions a' ~ pi(.|o') with their log-probabilities.
template <typename T>
struct PolicySample {
  Matrix<T> action;
  Vector<T> log_prob;
};

template <typename T>
PolicySample<T> sample_policy(const Agent<T>& agent, const Matrix<T>& obs, Rng& rng);

/// Stacks observation and action rows into critic inputs.
template <typename T>
Matrix<T> critic_input(const Matrix<T>& obs, const Matrix<T>& action);

/// CrossQ forward: every critic sees [(o, a) | (o', a')] as one train-mode
/// batch. Row i of the result holds critic i's outputs for all 2B columns.
/// Running statistics of the passed critics are updated.
template <typename T>
Matrix<T> joint_critic_forward(std::vector<nn::Mlp<T>>& critics, const Batch<T>& batch,
                               const Matrix<T>& next_action,
                               std::vector<typename nn::Mlp<T>::Tape>* tapes = nullptr);

/// Soft Bellman targets y = r + gamma (1 - done) (min_subset Q(o', a') - alpha log pi(a'|o')).
/// Leaves the agent untouched.
template <typename T>
Vector<T> critic_targets(const Batch<T>& batch, const Agent<T>& agent, Rng& rng);

template <typename T>
struct CriticLoss {
  T loss = T(0);  // critic-averaged mean squared Bellman error
  Vector<T> targets;
  std::vector<Vector<T>> grads;         // d mean((q_i - y)^2) / d params, per critic
  std::vector<nn::Mlp<T>> critics;      // copies after the forward pass (running statistics advanced)
};

/// Bellman error and its parameter gradients with the targets held fixed.
/// Throws NumericError on a non-finite loss.
template <typename T>
CriticLoss<T> critic_loss(const Agent<T>& agent, const Batch<T>& batch, Rng& rng);

/// One Adam step on every critic towards the soft Bellman targets. Returns
/// the critic-averaged mean squared Bellman error before the step. Throws
/// NumericError (leaving the agent unchanged) on a non-finite loss.
template <typename T>
T critic_update(Agent<T>& agent, const Batch<T>& batch, Rng& rng);

template <typename T>
struct ActorUpdateResult {
  T loss = T(0);
  Vector<T> log_prob;
};

template <typename T>
struct ActorLoss {
  T loss = T(0);
  Vector<T> grad;  // w.r.t. the actor's params()
  Vector<T> log_prob;
};

/// E[alpha log pi(a|o) - min_subset Q(o, a)] with reparameterized actions
/// and critics in eval mode, plus its gradient.
template <typename T>
ActorLoss<T> actor_loss(const Agent<T>& agent, const Batch<T>& batch, Rng& rng);

/// One Adam step on the actor minimizing E[alpha log pi(a|o) - Q(o, a)] with
/// reparameterized actions and critics evaluated in eval mode.
template <typename T>
ActorUpdateResult<T> actor_update(Agent<T>& agent, const Batch<T>& batch, Rng& rng);

/// d/d log alpha of E[-log alpha (log pi + target_entropy)].
template <typename T>
T temperature_grad(const Agent<T>& agent, const Vector<T>& log_prob);

/// One Adam step on log alpha minimizing E[-log alpha (log pi + target_entropy)].
template <typename T>
void temperature_update(Agent<T>& agent, const Vector<T>& log_prob);
template <typename T>
void temperature_update(Agent<T>& agent, const Batch<T>& batch, Rng& rng);

/// target <- (1 - tau) target + tau online.
template <typename T>
void polyak_update(const nn::Mlp<T>& online, nn::Mlp<T>& target, T tau);
/// Averages every target critic; ConfigError for variants without targets.
template <typename T>
void polyak_update(Agent<T>& agent);

template <typename T>
struct TrainStepMetrics {
  bool updated = false;
  T critic_loss = T(0);
  T actor_loss = T(0);
  T temperature = T(0);
  T mean_log_prob = T(0);
};

/// `utd` critic updates and `actor_updates_per_step` actor and temperature
/// updates. A no-op (updated = false) while the buffer holds fewer than
/// `learning_starts` transitions.
template <typename T>
TrainStepMetrics<T> train_step(Agent<T>& agent, const ReplayBuffer<T>& buffer, Rng& rng);

enum class ActMode { kExplore, kDeterministic };

/// Policy action scaled to [-bound, bound]. Explore mode uses `noise` as the
/// standard-normal draw; deterministic mode returns bound * tanh(mean).
template <typename T>
Vector<T> act(const Agent<T>& agent, const Vector<T>& obs, ActMode mode, const Vector<T>& noise,
              T bound = T(1));

}  // namespace quadlearn::rl
