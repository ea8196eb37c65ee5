#pragma once

// Model assembly and the training loop. Two model shapes are supported:
//
//   lenet5-like: conv(1->6,5x5) - act - maxpool2 - conv(6->16,5x5) - act -
//                maxpool2 - flatten - dense(400->120) - act -
//                dense(120->84) - act - dense(84->classes)
//                (28x28 inputs are zero-padded to 32x32; four activation layers)
//   mlp-2layer:  flatten - dense(d->64) - act - dense(64->classes)
//
// The batch-norm toggle inserts a 1-D batch norm before each activation in
// the dense stage. Weight init follows the activation family: Kaiming
// uniform for rectifier-like activations, Xavier uniform for the
// zero-mean-leaning ones (tanh, sigmoid, fplus, pfplus).

#include <cmath>
#include <optional>
#include <ostream>
#include <random>
#include <variant>

#include "fplus/activations.hpp"
#include "fplus/data.hpp"
#include "fplus/layers.hpp"
#include "fplus/optim.hpp"

namespace fplus {

enum class ModelKind { Lenet5Like, Mlp2Layer };

struct ModelSpec {
  ModelKind kind = ModelKind::Lenet5Like;
  ActivationKind activation = ActivationKind::relu();
  bool learnable_activation = false;
  // Initialization for learnable pfplus parameters; defaults to the
  // constants carried by the activation kind.
  std::optional<InitDistribution> lambda_init;
  std::optional<InitDistribution> mu_init;
};

struct SgdChoice {
  double momentum = 0.9;
};

struct AdamChoice {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using OptimizerChoice = std::variant<SgdChoice, AdamChoice>;

struct TrainConfig {
  int epochs = 5;
  int batch_size = 64;
  double lr0 = 0.001;
  LrSchedule schedule = ExponentialDecay{0.98};
  OptimizerChoice optimizer = AdamChoice{};
  std::uint64_t seed = 0;
  bool batch_norm = false;
};

inline void validate(const TrainConfig& c) {
  if (c.epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (c.batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(c.lr0 > 0.0)) throw std::invalid_argument("train config: lr0 must be > 0");
  validate(c.schedule);
  if (const auto* s = std::get_if<SgdChoice>(&c.optimizer)) {
    if (s->momentum < 0.0 || s->momentum >= 1.0) {
      throw std::invalid_argument("train config: momentum must be in [0, 1)");
    }
  }
}

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, int batch, double last_finite_loss)
      : std::runtime_error("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch) +
                           "; last finite loss " + std::to_string(last_finite_loss)),
        epoch_(epoch), batch_(batch), last_finite_loss_(last_finite_loss) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }
  double last_finite_loss() const { return last_finite_loss_; }

 private:
  int epoch_, batch_;
  double last_finite_loss_;
};

inline InitDistribution default_weight_init(const ActivationKind& k) {
  switch (k.tag) {
    case Act::Sigmoid:
    case Act::Tanh:
    case Act::FPLUS:
    case Act::PFPLUS:
      return InitDistribution::xavier_uniform();
    default:
      return InitDistribution::kaiming_uniform();
  }
}

class Network {
 public:
  Network(const ModelSpec& spec, Shape input_chw, int classes, std::uint64_t seed,
          bool batch_norm = false)
      : spec_(spec), input_chw_(std::move(input_chw)), classes_(classes),
        batch_norm_(batch_norm) {
    if (input_chw_.size() != 3) {
      throw std::invalid_argument("network: input shape must be [c, h, w], got " +
                                  shape_to_string(input_chw_));
    }
    std::mt19937_64 rng(seed);
    const InitDistribution weight_init = default_weight_init(spec.activation);
    if (spec_.kind == ModelKind::Lenet5Like) {
      build_lenet(weight_init, rng);
    } else {
      build_mlp(weight_init, rng);
    }
  }

  Tensor forward(const Tensor& batch, bool training) {
    if (batch.rank() != 4 || !std::equal(input_chw_.begin(), input_chw_.end(),
                                         batch.shape().begin() + 1)) {
      throw std::invalid_argument("network: batch " + shape_to_string(batch.shape()) +
                                  " incompatible with model input " +
                                  shape_to_string(input_chw_));
    }
    if (spec_.kind == ModelKind::Lenet5Like) return forward_lenet(batch, training);
    return forward_mlp(batch, training);
  }

  std::vector<NamedParam> parameters() { return params_; }
  std::vector<ActivationLayer>& activation_layers() { return acts_; }
  const ModelSpec& spec() const { return spec_; }
  int classes() const { return classes_; }
  bool batch_norm() const { return batch_norm_; }

  // Current (lambda, mu) of every activation layer, in network order; only
  // meaningful for pfplus (fixed layers report their constants).
  std::vector<std::pair<double, double>> activation_params() const {
    std::vector<std::pair<double, double>> out;
    if (spec_.activation.tag != Act::PFPLUS) return out;
    for (const ActivationLayer& layer : acts_) {
      if (layer.learnable()) {
        out.emplace_back(layer.lambda_value(), layer.mu_value());
      } else {
        out.emplace_back(layer.kind().pfplus.lambda, layer.kind().pfplus.mu);
      }
    }
    return out;
  }

 private:
  void add_activation(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    ActivationKind kind = spec_.activation;
    if (spec_.learnable_activation && kind.tag == Act::PFPLUS) {
      const InitDistribution ld =
          spec_.lambda_init.value_or(InitDistribution::constant(kind.pfplus.lambda));
      const InitDistribution md =
          spec_.mu_init.value_or(InitDistribution::constant(kind.pfplus.mu));
      // Positivity is kept by the same projection the optimizer applies:
      // draws below the floor are clamped up to it.
      kind.pfplus.lambda = std::max(
          init_sample(ld, fan_in, fan_out, rng, ParamSlot::Lambda), kPositiveFloor);
      kind.pfplus.mu = std::max(
          init_sample(md, fan_in, fan_out, rng, ParamSlot::Mu), kPositiveFloor);
    }
    acts_.emplace_back(kind, spec_.learnable_activation);
    const std::string prefix = "act" + std::to_string(acts_.size());
    ActivationLayer& layer = acts_.back();
    if (layer.learnable()) {
      auto p = layer.parameters();
      if (kind.tag == Act::PFPLUS) {
        params_.push_back({prefix + ".lambda", p[0], /*clamp_positive=*/true});
        params_.push_back({prefix + ".mu", p[1], /*clamp_positive=*/true});
      } else {
        params_.push_back({prefix + ".alpha", p[0], /*clamp_positive=*/false});
      }
    }
  }

  void add_batchnorm(std::size_t features) {
    bns_.emplace_back(features);
    const std::string prefix = "bn" + std::to_string(bns_.size());
    params_.push_back({prefix + ".gamma", bns_.back().gamma(), false});
    params_.push_back({prefix + ".beta", bns_.back().beta(), false});
  }

  void build_lenet(const InitDistribution& weight_init, std::mt19937_64& rng) {
    const std::size_t c = input_chw_[0], h = input_chw_[1], w = input_chw_[2];
    if (c != 1 || !((h == 28 && w == 28) || (h == 32 && w == 32))) {
      throw std::invalid_argument(
          "lenet5-like model expects [1,28,28] or [1,32,32] input, got " +
          shape_to_string(input_chw_));
    }
    pad_ = (h == 28) ? 2 : 0;
    convs_.reserve(2);
    dense_.reserve(3);
    bns_.reserve(2);
    convs_.emplace_back(1, 6, 5, 5, weight_init, rng);
    params_.push_back({"conv1.kernels", convs_[0].kernels(), false});
    add_activation(convs_[0].fan_in(), convs_[0].fan_out(), rng);
    convs_.emplace_back(6, 16, 5, 5, weight_init, rng);
    params_.push_back({"conv2.kernels", convs_[1].kernels(), false});
    add_activation(convs_[1].fan_in(), convs_[1].fan_out(), rng);
    dense_.emplace_back(16 * 5 * 5, 120, weight_init, rng);
    params_.push_back({"fc1.w", dense_[0].weights(), false});
    params_.push_back({"fc1.b", dense_[0].bias(), false});
    if (batch_norm_) add_batchnorm(120);
    add_activation(dense_[0].fan_in(), dense_[0].fan_out(), rng);
    dense_.emplace_back(120, 84, weight_init, rng);
    params_.push_back({"fc2.w", dense_[1].weights(), false});
    params_.push_back({"fc2.b", dense_[1].bias(), false});
    if (batch_norm_) add_batchnorm(84);
    add_activation(dense_[1].fan_in(), dense_[1].fan_out(), rng);
    dense_.emplace_back(84, static_cast<std::size_t>(classes_), weight_init, rng);
    params_.push_back({"fc3.w", dense_[2].weights(), false});
    params_.push_back({"fc3.b", dense_[2].bias(), false});
  }

  void build_mlp(const InitDistribution& weight_init, std::mt19937_64& rng) {
    const std::size_t d = input_chw_[0] * input_chw_[1] * input_chw_[2];
    dense_.reserve(2);
    dense_.emplace_back(d, 64, weight_init, rng);
    params_.push_back({"fc1.w", dense_[0].weights(), false});
    params_.push_back({"fc1.b", dense_[0].bias(), false});
    if (batch_norm_) add_batchnorm(64);
    add_activation(dense_[0].fan_in(), dense_[0].fan_out(), rng);
    dense_.emplace_back(64, static_cast<std::size_t>(classes_), weight_init, rng);
    params_.push_back({"fc2.w", dense_[1].weights(), false});
    params_.push_back({"fc2.b", dense_[1].bias(), false});
  }

  Tensor forward_lenet(const Tensor& batch, bool training) {
    Tensor x = pad_ ? pad2d(batch, pad_) : batch;
    x = maxpool2d(acts_[0].apply(convs_[0].forward(x)));
    x = maxpool2d(acts_[1].apply(convs_[1].forward(x)));
    x = flatten(x);
    x = dense_[0].forward(x);
    if (!bns_.empty()) x = bns_[0].forward(x, training);
    x = acts_[2].apply(x);
    x = dense_[1].forward(x);
    if (!bns_.empty()) x = bns_[1].forward(x, training);
    x = acts_[3].apply(x);
    return dense_[2].forward(x);
  }

  Tensor forward_mlp(const Tensor& batch, bool training) {
    Tensor x = flatten(batch);
    x = dense_[0].forward(x);
    if (!bns_.empty()) x = bns_[0].forward(x, training);
    x = acts_[0].apply(x);
    return dense_[1].forward(x);
  }

  ModelSpec spec_;
  Shape input_chw_;
  int classes_;
  bool batch_norm_;
  std::size_t pad_ = 0;
  std::vector<Conv2dLayer> convs_;
  std::vector<DenseLayer> dense_;
  std::vector<BatchNorm1d> bns_;
  std::vector<ActivationLayer> acts_;
  std::vector<NamedParam> params_;
};

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::pair<double, double>> act_params;  // (lambda, mu) per layer
};

struct TrajectoryLog {
  std::vector<std::pair<double, double>> initial_act_params;
  std::vector<EpochRecord> epochs;

  double final_test_accuracy() const {
    return epochs.empty() ? 0.0 : epochs.back().test_accuracy;
  }
  double final_train_loss() const {
    return epochs.empty() ? 0.0 : epochs.back().train_loss;
  }

  // CSV contract: epoch,split,loss,accuracy[,lambda_i,mu_i per layer].
  // The epoch-0 init row carries the initial parameters and empty metrics.
  void write_csv(std::ostream& os) const {
    os << "epoch,split,loss,accuracy";
    for (std::size_t i = 0; i < initial_act_params.size(); ++i) {
      os << ",lambda_" << (i + 1) << ",mu_" << (i + 1);
    }
    os << '\n';
    auto write_params = [&os](const std::vector<std::pair<double, double>>& ps) {
      for (const auto& [lambda, mu] : ps) os << ',' << lambda << ',' << mu;
      os << '\n';
    };
    if (!initial_act_params.empty()) {
      os << "0,init,,";
      write_params(initial_act_params);
    }
    for (const EpochRecord& r : epochs) {
      os << r.epoch << ",train," << r.train_loss << ',' << r.train_accuracy;
      write_params(r.act_params);
      os << r.epoch << ",test," << r.test_loss << ',' << r.test_accuracy;
      write_params(r.act_params);
    }
  }
};

inline Tensor gather_batch(const Dataset& d, std::span<const std::size_t> indices) {
  const Shape& s = d.images.shape();
  const std::size_t stride = s[1] * s[2] * s[3];
  std::vector<double> pixels(indices.size() * stride);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = d.images.data().data() + indices[i] * stride;
    std::copy(src, src + stride, pixels.data() + i * stride);
  }
  return Tensor({indices.size(), s[1], s[2], s[3]}, std::move(pixels));
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline EvalResult evaluate(Network& net, const Dataset& d,
                           std::size_t batch_size = 256) {
  EvalResult result;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < d.n(); start += batch_size) {
    const std::size_t count = std::min(batch_size, d.n() - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    Tensor batch = gather_batch(d, idx);
    std::vector<int> labels(d.labels.begin() + start, d.labels.begin() + start + count);
    Tensor logits = net.forward(batch, /*training=*/false);
    result.loss += softmax_cross_entropy(logits, labels).item() * count;
    const std::vector<int> predicted = argmax_rows(logits);
    for (std::size_t i = 0; i < count; ++i) correct += predicted[i] == labels[i];
  }
  result.loss /= static_cast<double>(d.n());
  result.accuracy = static_cast<double>(correct) / static_cast<double>(d.n());
  return result;
}

// Deterministic full training run; returns the per-epoch trajectory. The
// trained network is handed back through `trained` when a caller needs it
// (checkpointing, further evaluation).
inline TrajectoryLog train_model(const ModelSpec& spec, const Dataset& train,
                                 const Dataset& test, const TrainConfig& config,
                                 std::optional<Network>* trained = nullptr) {
  validate(config);
  if (train.n() == 0 || test.n() == 0) {
    throw std::invalid_argument("train_model: datasets must be nonempty");
  }
  const Shape& s = train.images.shape();
  Network net(spec, {s[1], s[2], s[3]}, train.class_count, config.seed,
              config.batch_norm);

  TrajectoryLog log;
  log.initial_act_params = net.activation_params();

  std::variant<std::monostate, SgdOptimizer, AdamOptimizer> optimizer;
  if (const auto* sgd = std::get_if<SgdChoice>(&config.optimizer)) {
    optimizer.emplace<SgdOptimizer>(net.parameters(), sgd->momentum);
  } else {
    const auto& adam = std::get<AdamChoice>(config.optimizer);
    optimizer.emplace<AdamOptimizer>(net.parameters(), adam.beta1, adam.beta2, adam.eps);
  }
  auto opt_zero = [&] {
    std::visit([](auto& o) {
      if constexpr (!std::is_same_v<std::decay_t<decltype(o)>, std::monostate>) o.zero_grad();
    }, optimizer);
  };
  auto opt_step = [&](double lr) {
    std::visit([lr](auto& o) {
      if constexpr (!std::is_same_v<std::decay_t<decltype(o)>, std::monostate>) o.step(lr);
    }, optimizer);
  };

  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train.n());
  std::iota(order.begin(), order.end(), 0);

  double last_finite_loss = 0.0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at(config.schedule, config.lr0, epoch - 1);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0, correct = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size, ++batch_index) {
      const std::size_t count =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      if (config.batch_norm && count < 2) break;  // batch norm needs batch >= 2
      std::span<const std::size_t> idx(order.data() + start, count);
      Tensor batch = gather_batch(train, idx);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = train.labels[idx[i]];

      Tensor logits = net.forward(batch, /*training=*/true);
      Tensor loss = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.item())) {
        throw DivergenceError(epoch, batch_index, last_finite_loss);
      }
      last_finite_loss = loss.item();
      epoch_loss += loss.item() * count;
      const std::vector<int> predicted = argmax_rows(logits);
      for (std::size_t i = 0; i < count; ++i) correct += predicted[i] == labels[i];
      seen += count;

      opt_zero();
      backward(loss);
      opt_step(lr);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
    record.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    const EvalResult test_result = evaluate(net, test);
    record.test_loss = test_result.loss;
    record.test_accuracy = test_result.accuracy;
    record.act_params = net.activation_params();
    log.epochs.push_back(std::move(record));
  }
  if (trained) trained->emplace(std::move(net));
  return log;
}

}  // namespace fplus
