#pragma once

// FPLUS and PFPLUS activations together with the reference activations they
// are compared against, each available as a pure scalar function and as an
// autodiff layer. PFPLUS is
//
//   f(x) = lambda * x             for x >= 0
//   f(x) = lambda * x / (1 - mu*x) for x <  0,   lambda > 0, mu > 0
//
// FPLUS is the lambda = mu = 1 member. The sign convention everywhere is
// sgn(0) = +1 / H(0) = 1: the nonnegative branch owns x = 0, so the
// derivative at the seam is lambda.

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fplus/tensor.hpp"

namespace fplus {

inline double sgn(double x) { return x >= 0.0 ? 1.0 : -1.0; }

inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

// Amplitude factor lambda scales both branches and sets the saturation
// depth lambda/mu; scale factor mu controls only how fast the negative
// branch attenuates.
struct PfplusParams {
  double lambda = 1.0;
  double mu = 1.0;
};

inline void validate(const PfplusParams& p) {
  if (!(p.lambda > 0.0) || !(p.mu > 0.0)) {
    throw std::invalid_argument("pfplus: requires lambda > 0 and mu > 0, got lambda=" +
                                std::to_string(p.lambda) + " mu=" + std::to_string(p.mu));
  }
}

inline double pfplus_eval(double x, const PfplusParams& p) {
  validate(p);
  return x >= 0.0 ? p.lambda * x : p.lambda * x / (1.0 - p.mu * x);
}

// Heaviside form lambda*x*(1-mu*x)^(H(x)-1). The exponent is 0 on the
// nonnegative branch and -1 on the negative one; evaluated literally through
// pow so the equivalence with the piecewise form is a real check.
inline double pfplus_heaviside_form(double x, const PfplusParams& p) {
  validate(p);
  return p.lambda * x * std::pow(1.0 - p.mu * x, heaviside(x) - 1.0);
}

struct PfplusGrad {
  double d_x;
  double d_lambda;
  double d_mu;
};

inline PfplusGrad pfplus_grad(double x, const PfplusParams& p) {
  validate(p);
  if (x >= 0.0) return {p.lambda, x, 0.0};
  const double denom = 1.0 - p.mu * x;  // > 1 for x < 0, so no pole
  const double inv2 = 1.0 / (denom * denom);
  return {p.lambda * inv2, x / denom, p.lambda * x * x * inv2};
}

inline double fplus_eval(double x) {
  return x >= 0.0 ? x : x / (1.0 - x);
}

// Sign-form evaluation [sgn(x)*x + 1]^sgn(x) - 1. With sgn = +1 the power
// and the trailing -1 cancel the +1 exactly, leaving x; with sgn = -1 the
// power is a reciprocal and the subtraction reduces to x/(1-x). Reducing
// algebraically keeps both forms bit-identical.
inline double fplus_sign_form(double x) {
  return sgn(x) > 0.0 ? x : x / (1.0 - x);
}

inline double fplus_grad(double x) {
  if (x >= 0.0) return 1.0;
  const double denom = 1.0 - x;
  return 1.0 / (denom * denom);
}

// ---------------------------------------------------------------------------
// Reference activations

// Self-normalizing constants; the fixed-point property E[selu(Z)] ~ 0,
// Var[selu(Z)] ~ 1 for Z ~ N(0,1) is re-verified by Monte Carlo in the test
// suite.
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline constexpr double kDefaultLeakySlope = 0.01;
inline constexpr double kDefaultPreluInit = 0.25;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  // max(x,0) + log1p(e^{-|x|}) stays finite past |x| ~ 700
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gauss_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

enum class Act {
  Sigmoid,
  Tanh,
  ReLU,
  LReLU,
  PReLU,
  ELU,
  SELU,
  Swish,
  GELU,
  Mish,
  FPLUS,
  PFPLUS,
};

// Tagged activation selector with its fixed hyperparameters stored inline.
struct ActivationKind {
  Act tag = Act::ReLU;
  double alpha = 0.0;        // LReLU / PReLU / ELU slope-or-scale
  double beta = 0.0;         // Swish
  double selu_lambda = 0.0;  // SELU
  double selu_alpha = 0.0;
  PfplusParams pfplus;

  static ActivationKind make_sigmoid() { return {Act::Sigmoid}; }
  static ActivationKind make_tanh() { return {Act::Tanh}; }
  static ActivationKind relu() { return {Act::ReLU}; }
  static ActivationKind lrelu(double alpha = kDefaultLeakySlope) {
    require_positive(alpha, "lrelu alpha");
    return {Act::LReLU, alpha};
  }
  static ActivationKind prelu(double alpha_init = kDefaultPreluInit) {
    require_positive(alpha_init, "prelu alpha");
    return {Act::PReLU, alpha_init};
  }
  static ActivationKind elu(double alpha = 1.0) {
    require_positive(alpha, "elu alpha");
    return {Act::ELU, alpha};
  }
  static ActivationKind selu(double lambda = kSeluLambda, double alpha = kSeluAlpha) {
    if (!(lambda > 1.0)) throw std::invalid_argument("selu: requires lambda > 1");
    require_positive(alpha, "selu alpha");
    ActivationKind k{Act::SELU};
    k.selu_lambda = lambda;
    k.selu_alpha = alpha;
    return k;
  }
  static ActivationKind swish(double beta = 1.0) {
    require_positive(beta, "swish beta");
    ActivationKind k{Act::Swish};
    k.beta = beta;
    return k;
  }
  static ActivationKind gelu() { return {Act::GELU}; }
  static ActivationKind mish() { return {Act::Mish}; }
  static ActivationKind fplus() { return {Act::FPLUS}; }
  static ActivationKind make_pfplus(PfplusParams p) {
    validate(p);
    ActivationKind k{Act::PFPLUS};
    k.pfplus = p;
    return k;
  }
  static ActivationKind make_pfplus(double lambda, double mu) {
    return make_pfplus(PfplusParams{lambda, mu});
  }

 private:
  static void require_positive(double v, const char* what) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(std::string(what) + " must be > 0, got " +
                                  std::to_string(v));
    }
  }
};

inline double activation_eval(const ActivationKind& k, double x) {
  switch (k.tag) {
    case Act::Sigmoid: return sigmoid(x);
    case Act::Tanh: return std::tanh(x);
    case Act::ReLU: return x >= 0.0 ? x : 0.0;
    case Act::LReLU:
    case Act::PReLU: return x >= 0.0 ? x : k.alpha * x;
    case Act::ELU: return x >= 0.0 ? x : k.alpha * std::expm1(x);
    case Act::SELU:
      return k.selu_lambda * (x >= 0.0 ? x : k.selu_alpha * std::expm1(x));
    case Act::Swish: return x * sigmoid(k.beta * x);
    case Act::GELU: return x * gauss_cdf(x);
    case Act::Mish: return x * std::tanh(softplus(x));
    case Act::FPLUS: return fplus_eval(x);
    case Act::PFPLUS: return pfplus_eval(x, k.pfplus);
  }
  throw std::logic_error("activation_eval: unhandled tag");
}

// Analytic derivative; ReLU-family seams at 0 return the right-hand
// derivative, consistent with sgn(0) = +1.
inline double activation_grad(const ActivationKind& k, double x) {
  switch (k.tag) {
    case Act::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Act::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Act::ReLU: return x >= 0.0 ? 1.0 : 0.0;
    case Act::LReLU:
    case Act::PReLU: return x >= 0.0 ? 1.0 : k.alpha;
    case Act::ELU: return x >= 0.0 ? 1.0 : k.alpha * std::exp(x);
    case Act::SELU:
      return k.selu_lambda * (x >= 0.0 ? 1.0 : k.selu_alpha * std::exp(x));
    case Act::Swish: {
      const double s = sigmoid(k.beta * x);
      return s + k.beta * x * s * (1.0 - s);
    }
    case Act::GELU: return gauss_cdf(x) + x * gauss_pdf(x);
    case Act::Mish: {
      const double t = std::tanh(softplus(x));
      return t + x * (1.0 - t * t) * sigmoid(x);
    }
    case Act::FPLUS: return fplus_grad(x);
    case Act::PFPLUS: return pfplus_grad(x, k.pfplus).d_x;
  }
  throw std::logic_error("activation_grad: unhandled tag");
}

inline bool supports_learnable(Act tag) {
  return tag == Act::PReLU || tag == Act::PFPLUS;
}

inline std::string activation_name(Act tag) {
  switch (tag) {
    case Act::Sigmoid: return "sigmoid";
    case Act::Tanh: return "tanh";
    case Act::ReLU: return "relu";
    case Act::LReLU: return "lrelu";
    case Act::PReLU: return "prelu";
    case Act::ELU: return "elu";
    case Act::SELU: return "selu";
    case Act::Swish: return "swish";
    case Act::GELU: return "gelu";
    case Act::Mish: return "mish";
    case Act::FPLUS: return "fplus";
    case Act::PFPLUS: return "pfplus";
  }
  return "?";
}

inline const std::vector<std::string>& activation_names() {
  static const std::vector<std::string> names = {
      "sigmoid", "tanh", "relu", "lrelu", "prelu", "elu",
      "selu",    "swish", "gelu", "mish",  "fplus", "pfplus"};
  return names;
}

// Builds a kind from its CLI name; lambda/mu apply to pfplus only.
inline std::optional<ActivationKind> activation_from_name(
    const std::string& name, std::optional<double> lambda = std::nullopt,
    std::optional<double> mu = std::nullopt) {
  if (name == "sigmoid") return ActivationKind::make_sigmoid();
  if (name == "tanh") return ActivationKind::make_tanh();
  if (name == "relu") return ActivationKind::relu();
  if (name == "lrelu") return ActivationKind::lrelu();
  if (name == "prelu") return ActivationKind::prelu();
  if (name == "elu") return ActivationKind::elu();
  if (name == "selu") return ActivationKind::selu();
  if (name == "swish") return ActivationKind::swish();
  if (name == "gelu") return ActivationKind::gelu();
  if (name == "mish") return ActivationKind::mish();
  if (name == "fplus") return ActivationKind::fplus();
  if (name == "pfplus") {
    return ActivationKind::make_pfplus(lambda.value_or(1.0), mu.value_or(1.0));
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Activation as an autodiff layer

// Applies an activation elementwise. In learnable mode (PFPLUS or PReLU
// only) the parameters are channel-shared scalars registered as
// requires-grad leaves; each scalar's gradient is the sum of the
// per-element parameter gradients over everything that flowed through the
// layer.
class ActivationLayer {
 public:
  ActivationLayer(ActivationKind kind, bool learnable)
      : kind_(kind), learnable_(learnable) {
    if (learnable && !supports_learnable(kind.tag)) {
      throw std::invalid_argument("activation layer: " + activation_name(kind.tag) +
                                  " does not support learnable parameters");
    }
    if (learnable_) {
      if (kind.tag == Act::PFPLUS) {
        lambda_ = Tensor::scalar(kind.pfplus.lambda, /*requires_grad=*/true);
        mu_ = Tensor::scalar(kind.pfplus.mu, /*requires_grad=*/true);
      } else {
        alpha_ = Tensor::scalar(kind.alpha, /*requires_grad=*/true);
      }
    }
  }

  Tensor apply(const Tensor& x) const {
    if (!learnable_) {
      const ActivationKind k = kind_;
      return elementwise_apply(
          x, [k](double v) { return activation_eval(k, v); },
          [k](double v) { return activation_grad(k, v); });
    }
    if (kind_.tag == Act::PFPLUS) return apply_pfplus(x);
    return apply_prelu(x);
  }

  std::vector<Tensor> parameters() {
    if (!learnable_) return {};
    if (kind_.tag == Act::PFPLUS) return {lambda_, mu_};
    return {alpha_};
  }

  bool learnable() const { return learnable_; }
  const ActivationKind& kind() const { return kind_; }
  double lambda_value() const { return lambda_.item(); }
  double mu_value() const { return mu_.item(); }

 private:
  Tensor apply_pfplus(const Tensor& x) const {
    const PfplusParams p{lambda_.item(), mu_.item()};
    validate(p);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pfplus_eval(x.data()[i], p);
    return make_op(x.shape(), std::move(out), {x, lambda_, mu_},
                   [p](detail::Node& self) {
                     detail::Node& px = *self.parents[0];
                     detail::Node& pl = *self.parents[1];
                     detail::Node& pm = *self.parents[2];
                     double acc_lambda = 0.0, acc_mu = 0.0;
                     for (std::size_t i = 0; i < self.grad.size(); ++i) {
                       const PfplusGrad g = pfplus_grad(px.values[i], p);
                       detail::Node::add_grad(px, i, self.grad[i] * g.d_x);
                       acc_lambda += self.grad[i] * g.d_lambda;
                       acc_mu += self.grad[i] * g.d_mu;
                     }
                     detail::Node::add_grad(pl, 0, acc_lambda);
                     detail::Node::add_grad(pm, 0, acc_mu);
                   });
  }

  Tensor apply_prelu(const Tensor& x) const {
    const double a = alpha_.item();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = x.data()[i];
      out[i] = v >= 0.0 ? v : a * v;
    }
    return make_op(x.shape(), std::move(out), {x, alpha_},
                   [a](detail::Node& self) {
                     detail::Node& px = *self.parents[0];
                     detail::Node& pa = *self.parents[1];
                     double acc = 0.0;
                     for (std::size_t i = 0; i < self.grad.size(); ++i) {
                       const double v = px.values[i];
                       detail::Node::add_grad(px, i, self.grad[i] * (v >= 0.0 ? 1.0 : a));
                       if (v < 0.0) acc += self.grad[i] * v;
                     }
                     detail::Node::add_grad(pa, 0, acc);
                   });
  }

  ActivationKind kind_;
  bool learnable_;
  Tensor lambda_, mu_, alpha_;
};

inline ActivationLayer make_activation_layer(ActivationKind kind, bool learnable) {
  return ActivationLayer(kind, learnable);
}

}  // namespace fplus
