#include "quadlearn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "quadlearn/errors.hpp"

namespace quadlearn::nn {

namespace {

template <typename T>
void check_finite(const Matrix<T>& m, int layer) {
  if (!m.allFinite()) {
    throw NumericError("non-finite activation", "layer " + std::to_string(layer));
  }
}

// Column-batch normalization statistics, shared by the standalone op and Mlp.
template <typename T>
void batch_stats(const Matrix<T>& z, T eps, Vector<T>& mean, Vector<T>& var, Vector<T>& inv_std,
                 Matrix<T>& x_hat) {
  const T n = static_cast<T>(z.cols());
  mean = z.rowwise().sum() / n;
  x_hat = z.colwise() - mean;
  var = x_hat.array().square().rowwise().sum() / n;
  inv_std = (var.array() + eps).rsqrt();
  x_hat = inv_std.asDiagonal() * x_hat;
}

// dz for train-mode batch norm given dx_hat (= dy * gamma).
template <typename T>
Matrix<T> batch_norm_input_grad(const Matrix<T>& dx_hat, const Matrix<T>& x_hat,
                                const Vector<T>& inv_std) {
  const T n = static_cast<T>(dx_hat.cols());
  const Vector<T> sum_d = dx_hat.rowwise().sum();
  const Vector<T> sum_dx = dx_hat.cwiseProduct(x_hat).rowwise().sum();
  Matrix<T> dz = (dx_hat * n).colwise() - sum_d;
  dz -= sum_dx.asDiagonal() * x_hat;
  return (inv_std / n).asDiagonal() * dz;
}

// Per-sample (column) layer normalization.
template <typename T>
void layer_stats(const Matrix<T>& z, T eps, Vector<T>& inv_std, Matrix<T>& x_hat) {
  const T n = static_cast<T>(z.rows());
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = z.colwise().sum() / n;
  x_hat = z.rowwise() - mean;
  const Eigen::Matrix<T, 1, Eigen::Dynamic> var = x_hat.array().square().colwise().sum() / n;
  inv_std = (var.array() + eps).rsqrt().transpose();
  x_hat = x_hat * inv_std.asDiagonal();
}

template <typename T>
Matrix<T> layer_norm_input_grad(const Matrix<T>& dx_hat, const Matrix<T>& x_hat,
                                const Vector<T>& inv_std) {
  const T n = static_cast<T>(dx_hat.rows());
  const Eigen::Matrix<T, 1, Eigen::Dynamic> sum_d = dx_hat.colwise().sum();
  const Eigen::Matrix<T, 1, Eigen::Dynamic> sum_dx = dx_hat.cwiseProduct(x_hat).colwise().sum();
  Matrix<T> dz = (dx_hat * n).rowwise() - sum_d;
  dz -= x_hat * sum_dx.asDiagonal();
  return dz * (inv_std / n).asDiagonal();
}

template <typename T>
Matrix<T> orthogonal(int rows, int cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const Matrix<T> g = standard_normal<T>(tall ? rows : cols, tall ? cols : rows, rng);
  Eigen::HouseholderQR<Matrix<T>> qr(g);
  Matrix<T> q = qr.householderQ() * Matrix<T>::Identity(g.rows(), g.cols());
  const Matrix<T> r = qr.matrixQR().topLeftCorner(g.cols(), g.cols());
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < T(0)) q.col(j) *= T(-1);
  }
  Matrix<T> out = tall ? q : Matrix<T>(q.transpose());
  return out * static_cast<T>(gain);
}

// tanh kept strictly inside (-1, 1) even where it rounds to +-1.
template <typename T>
T squash(T u) {
  constexpr T bound = T(1) - std::numeric_limits<T>::epsilon();
  return std::clamp(std::tanh(u), -bound, bound);
}

}  // namespace

template <typename T>
Vector<T> dense_forward(const Vector<T>& x, const DenseParams<T>& p) {
  if (p.weights.cols() != x.size() || p.weights.rows() != p.bias.size()) {
    throw ConfigError("dense_forward: shape mismatch");
  }
  return p.weights * x + p.bias;
}

template <typename T>
BatchNormState<T> BatchNormState<T>::identity(Eigen::Index n) {
  BatchNormState s;
  s.gamma = Vector<T>::Ones(n);
  s.beta = Vector<T>::Zero(n);
  s.running_mean = Vector<T>::Zero(n);
  s.running_var = Vector<T>::Ones(n);
  return s;
}

template <typename T>
Matrix<T> batchnorm_forward(const Matrix<T>& batch, BatchNormState<T>& s, Mode mode) {
  if (batch.rows() != s.gamma.size()) throw ConfigError("batchnorm_forward: feature mismatch");
  Matrix<T> x_hat;
  if (mode == Mode::kTrain) {
    if (batch.cols() < 2) throw InputError("batchnorm_forward: train mode needs at least 2 samples");
    Vector<T> mean, var, inv_std;
    batch_stats<T>(batch, s.epsilon, mean, var, inv_std, x_hat);
    s.running_mean = s.momentum * s.running_mean + (T(1) - s.momentum) * mean;
    s.running_var = s.momentum * s.running_var + (T(1) - s.momentum) * var;
  } else {
    const Vector<T> inv_std = (s.running_var.array() + s.epsilon).rsqrt();
    x_hat = inv_std.asDiagonal() * (batch.colwise() - s.running_mean);
  }
  return (s.gamma.asDiagonal() * x_hat).colwise() + s.beta;
}

// ---------------------------------------------------------------------------
// Mlp

template <typename T>
void Mlp<T>::build_layout() {
  if (spec_.sizes.size() < 2) throw ConfigError("Mlp: need at least input and output sizes");
  for (int s : spec_.sizes) {
    if (s <= 0) throw ConfigError("Mlp: layer sizes must be positive");
  }
  if (spec_.dropout < 0.0 || spec_.dropout >= 1.0) throw ConfigError("Mlp: dropout must be in [0,1)");
  layout_.clear();
  Eigen::Index offset = 0;
  const int n_layers = static_cast<int>(spec_.sizes.size()) - 1;
  for (int l = 0; l < n_layers; ++l) {
    Slot slot;
    slot.in = spec_.sizes[l];
    slot.out = spec_.sizes[l + 1];
    slot.w = offset;
    offset += static_cast<Eigen::Index>(slot.in) * slot.out;
    slot.b = offset;
    offset += slot.out;
    if (l + 1 < n_layers && spec_.norm != Norm::kNone) {
      slot.gamma = offset;
      offset += slot.out;
      slot.beta = offset;
      offset += slot.out;
    }
    layout_.push_back(slot);
  }
  params_ = Vector<T>::Zero(offset);
  running_mean_.clear();
  running_var_.clear();
  for (int l = 0; l + 1 < n_layers; ++l) {
    if (spec_.norm != Norm::kNone) {
      gamma(l).setOnes();
    }
    if (spec_.norm == Norm::kBatch) {
      running_mean_.push_back(Vector<T>::Zero(layout_[l].out));
      running_var_.push_back(Vector<T>::Ones(layout_[l].out));
    }
  }
}

template <typename T>
Mlp<T>::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  build_layout();
  for (int l = 0; l < num_layers(); ++l) {
    const double gain = l + 1 == num_layers() ? spec_.output_gain : spec_.hidden_gain;
    weights(l) = orthogonal<T>(layout_[l].out, layout_[l].in, gain, rng);
  }
}

template <typename T>
Mlp<T> Mlp<T>::zeros(MlpSpec spec) {
  Mlp m;
  m.spec_ = std::move(spec);
  m.build_layout();
  return m;
}

template <typename T>
Eigen::Map<Matrix<T>> Mlp<T>::weights(int l) {
  return {params_.data() + layout_[l].w, layout_[l].out, layout_[l].in};
}
template <typename T>
Eigen::Map<const Matrix<T>> Mlp<T>::weights(int l) const {
  return {params_.data() + layout_[l].w, layout_[l].out, layout_[l].in};
}
template <typename T>
Eigen::Map<Vector<T>> Mlp<T>::bias(int l) {
  return {params_.data() + layout_[l].b, layout_[l].out};
}
template <typename T>
Eigen::Map<const Vector<T>> Mlp<T>::bias(int l) const {
  return {params_.data() + layout_[l].b, layout_[l].out};
}
template <typename T>
Eigen::Map<Vector<T>> Mlp<T>::gamma(int l) {
  return {params_.data() + layout_[l].gamma, layout_[l].out};
}
template <typename T>
Eigen::Map<Vector<T>> Mlp<T>::beta(int l) {
  return {params_.data() + layout_[l].beta, layout_[l].out};
}

template <typename T>
Matrix<T> Mlp<T>::forward(const Matrix<T>& x, Mode mode, Tape* tape, Rng* rng) {
  std::vector<std::pair<Vector<T>, Vector<T>>> stats;
  Matrix<T> out = run_forward(x, mode, tape, rng, &stats);
  const T m = static_cast<T>(spec_.bn_momentum);
  for (std::size_t l = 0; l < stats.size(); ++l) {
    running_mean_[l] = m * running_mean_[l] + (T(1) - m) * stats[l].first;
    running_var_[l] = m * running_var_[l] + (T(1) - m) * stats[l].second;
  }
  return out;
}

template <typename T>
Matrix<T> Mlp<T>::forward_eval(const Matrix<T>& x, Tape* tape) const {
  return run_forward(x, Mode::kEval, tape, nullptr, nullptr);
}

template <typename T>
Matrix<T> Mlp<T>::run_forward(const Matrix<T>& x, Mode mode, Tape* tape, Rng* rng,
                              BatchStats* batch_stats_out) const {
  if (x.rows() != input_dim()) throw ConfigError("Mlp::forward: input width mismatch");
  if (tape) *tape = Tape{};
  if (tape) tape->mode = mode;
  const bool train = mode == Mode::kTrain;
  const bool use_dropout = train && spec_.dropout > 0.0;
  if (use_dropout && rng == nullptr) throw ConfigError("Mlp::forward: dropout needs an rng");
  if (train && spec_.norm == Norm::kBatch && x.cols() < 2) {
    throw InputError("Mlp::forward: batch norm in train mode needs at least 2 samples");
  }

  Matrix<T> h = x;
  const int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Matrix<T> z = weights(l) * h;
    z.colwise() += bias(l);
    if (tape) tape->inputs.push_back(std::move(h));
    if (l == last) {
      check_finite(z, l);
      return z;
    }

    if (use_dropout) {
      const T keep = T(1) - static_cast<T>(spec_.dropout);
      std::bernoulli_distribution coin(static_cast<double>(keep));
      Matrix<T> mask(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = coin(*rng) ? T(1) / keep : T(0);
      z = z.cwiseProduct(mask);
      if (tape) tape->masks.push_back(std::move(mask));
    } else if (tape) {
      tape->masks.emplace_back();
    }

    if (spec_.norm != Norm::kNone) {
      Matrix<T> x_hat;
      Vector<T> inv_std;
      if (spec_.norm == Norm::kBatch) {
        if (train) {
          Vector<T> mean, var;
          batch_stats<T>(z, static_cast<T>(spec_.bn_epsilon), mean, var, inv_std, x_hat);
          if (batch_stats_out) batch_stats_out->emplace_back(std::move(mean), std::move(var));
        } else {
          inv_std = (running_var_[l].array() + static_cast<T>(spec_.bn_epsilon)).rsqrt();
          x_hat = inv_std.asDiagonal() * (z.colwise() - running_mean_[l]);
        }
      } else {
        layer_stats<T>(z, static_cast<T>(spec_.ln_epsilon), inv_std, x_hat);
      }
      const auto g = Eigen::Map<const Vector<T>>(params_.data() + layout_[l].gamma, layout_[l].out);
      const auto b = Eigen::Map<const Vector<T>>(params_.data() + layout_[l].beta, layout_[l].out);
      z = (g.asDiagonal() * x_hat).colwise() + b;
      if (tape) {
        tape->normed.push_back(std::move(x_hat));
        tape->inv_std.push_back(std::move(inv_std));
      }
    }
    h = z.cwiseMax(T(0));
    if (tape) tape->preact.push_back(std::move(z));
    check_finite(h, l);
  }
  return h;  // unreachable: the last layer returns above
}

template <typename T>
Matrix<T> Mlp<T>::backward(const Tape& tape, const Matrix<T>& d_out, Vector<T>* grad) const {
  const int last = num_layers() - 1;
  if (static_cast<int>(tape.inputs.size()) != num_layers()) {
    throw ConfigError("Mlp::backward: tape does not match network");
  }
  if (grad && grad->size() != params_.size()) *grad = Vector<T>::Zero(params_.size());
  Matrix<T> d = d_out;
  for (int l = last; l >= 0; --l) {
    const Slot& s = layout_[l];
    if (l != last) {
      d = d.cwiseProduct((tape.preact[l].array() > T(0)).template cast<T>().matrix());
      if (spec_.norm != Norm::kNone) {
        const Matrix<T>& x_hat = tape.normed[l];
        const auto g = Eigen::Map<const Vector<T>>(params_.data() + s.gamma, s.out);
        if (grad) {
          grad->segment(s.gamma, s.out) += d.cwiseProduct(x_hat).rowwise().sum();
          grad->segment(s.beta, s.out) += d.rowwise().sum();
        }
        const Matrix<T> dx_hat = g.asDiagonal() * d;
        if (spec_.norm == Norm::kLayer) {
          d = layer_norm_input_grad<T>(dx_hat, x_hat, tape.inv_std[l]);
        } else if (tape.mode == Mode::kTrain) {
          d = batch_norm_input_grad<T>(dx_hat, x_hat, tape.inv_std[l]);
        } else {
          d = tape.inv_std[l].asDiagonal() * dx_hat;
        }
      }
      if (tape.masks[l].size() > 0) d = d.cwiseProduct(tape.masks[l]);
    }
    const Matrix<T>& input = tape.inputs[l];
    if (grad) {
      Eigen::Map<Matrix<T>> gw(grad->data() + s.w, s.out, s.in);
      gw.noalias() += d * input.transpose();
      grad->segment(s.b, s.out) += d.rowwise().sum();
    }
    d = weights(l).transpose() * d;
  }
  return d;
}

template <typename T>
MlpGradients<T> mlp_forward_backward(Mlp<T>& net, const Matrix<T>& inputs,
                                     const Matrix<T>& loss_grad, Mode mode, Rng* rng) {
  typename Mlp<T>::Tape tape;
  MlpGradients<T> out;
  out.outputs = net.forward(inputs, mode, &tape, rng);
  if (loss_grad.rows() != out.outputs.rows() || loss_grad.cols() != out.outputs.cols()) {
    throw ConfigError("mlp_forward_backward: loss gradient shape mismatch");
  }
  out.param_grads = Vector<T>::Zero(net.params().size());
  out.input_grads = net.backward(tape, loss_grad, &out.param_grads);
  return out;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
AdamState<T> AdamState<T>::zeros(Eigen::Index n, T learning_rate) {
  AdamState s;
  s.first_moment = Vector<T>::Zero(n);
  s.second_moment = Vector<T>::Zero(n);
  s.learning_rate = learning_rate;
  return s;
}

template <typename T>
void adam_step(Eigen::Ref<Vector<T>> params, const Eigen::Ref<const Vector<T>>& grads,
               AdamState<T>& s) {
  if (params.size() != grads.size() || params.size() != s.first_moment.size() ||
      params.size() != s.second_moment.size()) {
    throw ConfigError("adam_step: shape mismatch");
  }
  s.step_count += 1;
  s.first_moment = s.beta1 * s.first_moment + (T(1) - s.beta1) * grads;
  s.second_moment = s.beta2 * s.second_moment + (T(1) - s.beta2) * grads.cwiseProduct(grads);
  const T t = static_cast<T>(s.step_count);
  const T c1 = T(1) - std::pow(s.beta1, t);
  const T c2 = T(1) - std::pow(s.beta2, t);
  params.array() -= s.learning_rate * (s.first_moment.array() / c1) /
                    ((s.second_moment.array() / c2).sqrt() + s.epsilon);
}

// ---------------------------------------------------------------------------
// Squashed Gaussian

template <typename T>
T log1m_tanh_sq(T u) {
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  const T x = T(-2) * u;
  const T softplus = x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return T(2) * (std::numbers::ln2_v<T> - u - softplus);
}

template <typename T>
SquashedGaussianHead<T> SquashedGaussianHead<T>::from_raw(const Vector<T>& mean,
                                                          const Vector<T>& raw_log_std) {
  return {mean, raw_log_std.cwiseMax(static_cast<T>(kLogStdMin)).cwiseMin(static_cast<T>(kLogStdMax))};
}

template <typename T>
SquashedSample<T> squashed_sample(const SquashedGaussianHead<T>& head, const Vector<T>& noise) {
  if (head.mean.size() != noise.size() || head.log_std.size() != noise.size()) {
    throw ConfigError("squashed_sample: dimension mismatch");
  }
  const T half_log_2pi = T(0.5) * std::log(T(2) * std::numbers::pi_v<T>);
  SquashedSample<T> out;
  out.action.resize(noise.size());
  out.log_prob = T(0);
  for (Eigen::Index i = 0; i < noise.size(); ++i) {
    const T ls = std::clamp(head.log_std[i], static_cast<T>(kLogStdMin), static_cast<T>(kLogStdMax));
    const T u = head.mean[i] + std::exp(ls) * noise[i];
    out.action[i] = squash(u);
    out.log_prob += -T(0.5) * noise[i] * noise[i] - ls - half_log_2pi - log1m_tanh_sq(u);
  }
  return out;
}

template <typename T>
SquashedBatch<T> squashed_batch(const Matrix<T>& raw, const Matrix<T>& noise) {
  const Eigen::Index d = noise.rows();
  if (raw.rows() != 2 * d || raw.cols() != noise.cols()) {
    throw ConfigError("squashed_batch: actor output shape mismatch");
  }
  const T half_log_2pi = T(0.5) * std::log(T(2) * std::numbers::pi_v<T>);
  SquashedBatch<T> s;
  s.noise = noise;
  s.action.resize(d, noise.cols());
  s.std.resize(d, noise.cols());
  s.log_std_active.resize(d, noise.cols());
  s.log_prob = Vector<T>::Zero(noise.cols());
  const T lo = static_cast<T>(kLogStdMin), hi = static_cast<T>(kLogStdMax);
  for (Eigen::Index j = 0; j < noise.cols(); ++j) {
    T lp = T(0);
    for (Eigen::Index i = 0; i < d; ++i) {
      const T raw_ls = raw(d + i, j);
      const T ls = std::clamp(raw_ls, lo, hi);
      s.log_std_active(i, j) = (raw_ls > lo && raw_ls < hi) ? T(1) : T(0);
      const T sd = std::exp(ls);
      const T u = raw(i, j) + sd * noise(i, j);
      s.std(i, j) = sd;
      s.action(i, j) = squash(u);
      lp += -T(0.5) * noise(i, j) * noise(i, j) - ls - half_log_2pi - log1m_tanh_sq(u);
    }
    s.log_prob[j] = lp;
  }
  return s;
}

template <typename T>
Matrix<T> squashed_batch_backward(const SquashedBatch<T>& s, const Matrix<T>& d_action,
                                  const Vector<T>& d_log_prob) {
  const Eigen::Index d = s.action.rows();
  Matrix<T> out(2 * d, s.action.cols());
  for (Eigen::Index j = 0; j < s.action.cols(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const T a = s.action(i, j);
      // d log_prob / du = 2a, d action / du = 1 - a^2, du/dlog_std = std * noise
      const T d_u = d_action(i, j) * (T(1) - a * a) + d_log_prob[j] * T(2) * a;
      const T du_dls = s.std(i, j) * s.noise(i, j);
      out(i, j) = d_u;
      out(d + i, j) = (d_u * du_dls - d_log_prob[j]) * s.log_std_active(i, j);
    }
  }
  return out;
}

template <typename T>
Matrix<T> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<T> dist;
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

#define QUADLEARN_NN_INSTANTIATE(T)                                                            \
  template Vector<T> dense_forward<T>(const Vector<T>&, const DenseParams<T>&);              \
  template struct BatchNormState<T>;                                                         \
  template Matrix<T> batchnorm_forward<T>(const Matrix<T>&, BatchNormState<T>&, Mode);       \
  template class Mlp<T>;                                                                     \
  template MlpGradients<T> mlp_forward_backward<T>(Mlp<T>&, const Matrix<T>&,                \
                                                   const Matrix<T>&, Mode, Rng*);            \
  template struct AdamState<T>;                                                              \
  template void adam_step<T>(Eigen::Ref<Vector<T>>, const Eigen::Ref<const Vector<T>>&,      \
                             AdamState<T>&);                                                 \
  template struct SquashedGaussianHead<T>;                                                   \
  template SquashedSample<T> squashed_sample<T>(const SquashedGaussianHead<T>&,              \
                                                const Vector<T>&);                           \
  template SquashedBatch<T> squashed_batch<T>(const Matrix<T>&, const Matrix<T>&);           \
  template Matrix<T> squashed_batch_backward<T>(const SquashedBatch<T>&, const Matrix<T>&,   \
                                                const Vector<T>&);                           \
  template T log1m_tanh_sq<T>(T);                                                            \
  template Matrix<T> standard_normal<T>(Eigen::Index, Eigen::Index, Rng&);

QUADLEARN_NN_INSTANTIATE(float)
QUADLEARN_NN_INSTANTIATE(double)

#undef QUADLEARN_NN_INSTANTIATE

}  // namespace quadlearn::nn
