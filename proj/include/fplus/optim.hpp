#pragma once

// SGD with momentum, Adam, and the three learning-rate decay schedules.
// Parameters flagged clamp_positive (the pfplus lambda/mu scalars) are
// projected to >= 1e-4 after every step so their positivity constraint
// survives gradient descent.

#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fplus/tensor.hpp"

namespace fplus {

inline constexpr double kPositiveFloor = 1e-4;

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool clamp_positive = false;
};

inline void check_params_ready(const std::vector<NamedParam>& params) {
  for (const NamedParam& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) {
      throw std::invalid_argument("optimizer: parameter '" + p.name +
                                  "' has no gradient");
    }
  }
}

inline void clamp_positive_params(std::vector<NamedParam>& params) {
  for (NamedParam& p : params) {
    if (!p.clamp_positive) continue;
    for (double& v : p.tensor.data()) v = std::max(v, kPositiveFloor);
  }
}

class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<NamedParam> params, double momentum = 0.0)
      : params_(std::move(params)), momentum_(momentum) {
    if (momentum < 0.0 || momentum >= 1.0) {
      throw std::invalid_argument("sgd: momentum must be in [0, 1)");
    }
    check_params_ready(params_);
    velocity_.reserve(params_.size());
    for (const NamedParam& p : params_) {
      velocity_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  // v <- momentum*v + g; w <- w - lr*v
  void step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto data = params_[i].tensor.data();
      auto grad = params_[i].tensor.grad();
      std::vector<double>& v = velocity_[i];
      for (std::size_t j = 0; j < data.size(); ++j) {
        v[j] = momentum_ * v[j] + grad[j];
        data[j] -= lr * v[j];
      }
    }
    clamp_positive_params(params_);
  }

  void zero_grad() {
    for (NamedParam& p : params_) p.tensor.zero_grad();
  }

  std::vector<NamedParam>& params() { return params_; }

 private:
  std::vector<NamedParam> params_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedParam> params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    check_params_ready(params_);
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const NamedParam& p : params_) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto data = params_[i].tensor.data();
      auto grad = params_[i].tensor.grad();
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      for (std::size_t j = 0; j < data.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
    clamp_positive_params(params_);
  }

  void zero_grad() {
    for (NamedParam& p : params_) p.tensor.zero_grad();
  }

  std::vector<NamedParam>& params() { return params_; }

 private:
  std::vector<NamedParam> params_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Learning-rate schedules

struct StepDecay {
  double gamma;
  int period;
};

struct ExponentialDecay {
  double base;
};

struct MultiStep {
  double gamma;
  std::vector<int> milestones;
};

using LrSchedule = std::variant<StepDecay, ExponentialDecay, MultiStep>;

inline void validate(const LrSchedule& schedule) {
  if (const auto* s = std::get_if<StepDecay>(&schedule)) {
    if (!(s->gamma > 0.0 && s->gamma < 1.0) || s->period < 1) {
      throw std::invalid_argument("step decay: gamma in (0,1) and period >= 1 required");
    }
  } else if (const auto* e = std::get_if<ExponentialDecay>(&schedule)) {
    if (!(e->base > 0.0 && e->base < 1.0)) {
      throw std::invalid_argument("exponential decay: base in (0,1) required");
    }
  } else if (const auto* m = std::get_if<MultiStep>(&schedule)) {
    if (!(m->gamma > 0.0 && m->gamma < 1.0)) {
      throw std::invalid_argument("multistep decay: gamma in (0,1) required");
    }
  }
}

inline double lr_at(const LrSchedule& schedule, double lr0, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  if (const auto* s = std::get_if<StepDecay>(&schedule)) {
    return lr0 * std::pow(s->gamma, epoch / s->period);
  }
  if (const auto* e = std::get_if<ExponentialDecay>(&schedule)) {
    return lr0 * std::pow(e->base, epoch);
  }
  const auto& m = std::get<MultiStep>(schedule);
  int passed = 0;
  for (int milestone : m.milestones) {
    if (epoch >= milestone) ++passed;
  }
  return lr0 * std::pow(m.gamma, passed);
}

}  // namespace fplus
