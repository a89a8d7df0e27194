#pragma once

// Small dense-network toolkit for the actor and critics: affine layers, batch
// and layer normalization, inverted dropout, Adam and the tanh-squashed
// Gaussian policy head.
//
// Batches are stored column-major with one sample per column, so a batch of B
// inputs of width n is an (n x B) matrix.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace quadlearn::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

template <typename T>
struct DenseParams {
  Matrix<T> weights;  // n_out x n_in
  Vector<T> bias;     // n_out
};

/// y = W x + b. Throws ConfigError on a shape mismatch.
template <typename T>
Vector<T> dense_forward(const Vector<T>& x, const DenseParams<T>& p);

template <typename T>
struct BatchNormState {
  Vector<T> gamma;
  Vector<T> beta;
  Vector<T> running_mean;
  Vector<T> running_var;
  T momentum = T(0.99);
  T epsilon = T(1e-5);

  /// gamma = 1, beta = 0, running statistics (0, 1).
  static BatchNormState identity(Eigen::Index n);
};

/// Train mode normalizes with the batch statistics (biased variance) and
/// folds them into the running statistics as
/// `running = momentum * running + (1 - momentum) * batch`.
/// Eval mode normalizes with the running statistics. Requires >= 2 samples in
/// train mode (InputError otherwise).
template <typename T>
Matrix<T> batchnorm_forward(const Matrix<T>& batch, BatchNormState<T>& s, Mode mode);

enum class Norm { kNone, kBatch, kLayer };

struct MlpSpec {
  std::vector<int> sizes;  // input, hidden..., output
  Norm norm = Norm::kNone;  // after every hidden affine layer
  double dropout = 0.0;     // inverted dropout after every hidden affine layer
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-5;
  double ln_epsilon = 1e-5;
  double hidden_gain = 1.4142135623730951;
  double output_gain = 1.0;
};

/// Fully connected ReLU network. Trainable parameters live in one flat vector
/// so optimizers, Polyak averaging and checkpoints treat a network as a single
/// array. Hidden layer order: affine -> dropout -> norm -> ReLU.
template <typename T>
class Mlp {
 public:
  /// Everything the backward pass needs from one forward pass.
  struct Tape {
    Mode mode = Mode::kEval;
    std::vector<Matrix<T>> inputs;   // input of each affine layer
    std::vector<Matrix<T>> normed;   // x_hat of each hidden norm
    std::vector<Vector<T>> inv_std;  // per-feature (batch) or per-sample (layer)
    std::vector<Matrix<T>> masks;    // dropout scale masks, empty when unused
    std::vector<Matrix<T>> preact;   // input of each ReLU
  };

  Mlp() = default;
  /// Orthogonal initialization scaled by the MlpSpec gains, zero biases.
  Mlp(MlpSpec spec, Rng& rng);
  /// All-zero weights and biases (norm gains still 1).
  static Mlp zeros(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  int num_layers() const { return static_cast<int>(layout_.size()); }
  int input_dim() const { return spec_.sizes.front(); }
  int output_dim() const { return spec_.sizes.back(); }

  Vector<T>& params() { return params_; }
  const Vector<T>& params() const { return params_; }

  Eigen::Map<Matrix<T>> weights(int layer);
  Eigen::Map<const Matrix<T>> weights(int layer) const;
  Eigen::Map<Vector<T>> bias(int layer);
  Eigen::Map<const Vector<T>> bias(int layer) const;
  Eigen::Map<Vector<T>> gamma(int hidden);
  Eigen::Map<Vector<T>> beta(int hidden);

  std::vector<Vector<T>>& running_mean() { return running_mean_; }
  std::vector<Vector<T>>& running_var() { return running_var_; }
  const std::vector<Vector<T>>& running_mean() const { return running_mean_; }
  const std::vector<Vector<T>>& running_var() const { return running_var_; }

  /// Train mode uses batch statistics (updating running stats) and dropout,
  /// which needs `rng` when the dropout rate is positive. Throws NumericError
  /// naming the layer on a non-finite activation.
  Matrix<T> forward(const Matrix<T>& x, Mode mode, Tape* tape = nullptr, Rng* rng = nullptr);
  /// Eval-mode forward that leaves the network untouched.
  Matrix<T> forward_eval(const Matrix<T>& x, Tape* tape = nullptr) const;

  /// Reverse pass. Accumulates parameter gradients into `grad` (same layout as
  /// params(), may be null) and returns the gradient w.r.t. the input batch.
  Matrix<T> backward(const Tape& tape, const Matrix<T>& d_out, Vector<T>* grad) const;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(params_, running_mean_, running_var_);
  }

 private:
  struct Slot {
    Eigen::Index w = 0, b = 0, gamma = -1, beta = -1;
    int in = 0, out = 0;
  };

  void build_layout();
  using BatchStats = std::vector<std::pair<Vector<T>, Vector<T>>>;
  Matrix<T> run_forward(const Matrix<T>& x, Mode mode, Tape* tape, Rng* rng,
                        BatchStats* batch_stats_out) const;

  MlpSpec spec_;
  std::vector<Slot> layout_;
  Vector<T> params_;
  std::vector<Vector<T>> running_mean_;
  std::vector<Vector<T>> running_var_;
};

template <typename T>
struct MlpGradients {
  Matrix<T> outputs;
  Vector<T> param_grads;
  Matrix<T> input_grads;
};

/// One forward pass followed by the reverse pass for the given upstream
/// gradient of the loss w.r.t. the outputs.
template <typename T>
MlpGradients<T> mlp_forward_backward(Mlp<T>& net, const Matrix<T>& inputs,
                                     const Matrix<T>& loss_grad, Mode mode,
                                     Rng* rng = nullptr);

template <typename T>
struct AdamState {
  Vector<T> first_moment;
  Vector<T> second_moment;
  std::int64_t step_count = 0;
  T learning_rate = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);

  static AdamState zeros(Eigen::Index n, T learning_rate);

  template <class Archive>
  void serialize(Archive& ar) {
    ar(first_moment, second_moment, step_count, learning_rate, beta1, beta2, epsilon);
  }
};

/// Bias-corrected Adam: theta -= lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void adam_step(Eigen::Ref<Vector<T>> params, const Eigen::Ref<const Vector<T>>& grads,
               AdamState<T>& s);

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

template <typename T>
struct SquashedGaussianHead {
  Vector<T> mean;
  Vector<T> log_std;  // always inside [kLogStdMin, kLogStdMax]

  static SquashedGaussianHead from_raw(const Vector<T>& mean, const Vector<T>& raw_log_std);
};

template <typename T>
struct SquashedSample {
  Vector<T> action;  // strictly inside (-1, 1)^d for finite inputs
  T log_prob;
};

/// action = tanh(mean + std * noise), log_prob includes the tanh Jacobian.
/// noise = 0 gives the deterministic action tanh(mean).
template <typename T>
SquashedSample<T> squashed_sample(const SquashedGaussianHead<T>& head, const Vector<T>& noise);

/// Batched squashed sampling straight from an actor output of shape (2d x B):
/// rows [0, d) are means, rows [d, 2d) raw log standard deviations.
template <typename T>
struct SquashedBatch {
  Matrix<T> action;
  Vector<T> log_prob;
  Matrix<T> std;
  Matrix<T> noise;
  Matrix<T> log_std_active;  // 1 where the log_std clamp is inactive
};

template <typename T>
SquashedBatch<T> squashed_batch(const Matrix<T>& raw, const Matrix<T>& noise);

/// Gradient of a loss w.r.t. the raw actor output given dL/daction and
/// dL/dlog_prob (the noise is held fixed: reparameterization).
template <typename T>
Matrix<T> squashed_batch_backward(const SquashedBatch<T>& s, const Matrix<T>& d_action,
                                  const Vector<T>& d_log_prob);

/// Numerically stable log(1 - tanh(u)^2).
template <typename T>
T log1m_tanh_sq(T u);

template <typename T>
Matrix<T> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace quadlearn::nn
