#pragma once

// Initialization schemes for weights and for the learnable activation
// parameters. Xavier/Kaiming variants sample around zero and so produce
// negative draws; they are refused outright for the mu slot, whose
// positivity the pfplus form depends on.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace fplus {

enum class ParamSlot { Weight, Lambda, Mu };

class ForbiddenDistributionError : public std::invalid_argument {
 public:
  explicit ForbiddenDistributionError(const std::string& dist)
      : std::invalid_argument(
            dist + " initialization is not allowed for mu: zero-centered "
                   "draws produce negative values, violating mu > 0") {}
};

struct InitDistribution {
  enum class Kind {
    Constant,
    Uniform,
    Normal,
    XavierUniform,
    XavierNormal,
    KaimingUniform,
    KaimingNormal,
  };

  Kind kind = Kind::Constant;
  double a = 1.0;  // Constant: c; Uniform: low; Normal: mean
  double b = 0.0;  // Uniform: high; Normal: stddev

  static InitDistribution constant(double c) { return {Kind::Constant, c, 0.0}; }
  static InitDistribution uniform(double low, double high) {
    if (!(low < high)) {
      throw std::invalid_argument("uniform init: requires low < high, got [" +
                                  std::to_string(low) + ", " + std::to_string(high) + ")");
    }
    return {Kind::Uniform, low, high};
  }
  static InitDistribution normal(double mean, double stddev) {
    if (!(stddev > 0.0)) {
      throw std::invalid_argument("normal init: requires stddev > 0, got " +
                                  std::to_string(stddev));
    }
    return {Kind::Normal, mean, stddev};
  }
  static InitDistribution xavier_uniform() { return {Kind::XavierUniform}; }
  static InitDistribution xavier_normal() { return {Kind::XavierNormal}; }
  static InitDistribution kaiming_uniform() { return {Kind::KaimingUniform}; }
  static InitDistribution kaiming_normal() { return {Kind::KaimingNormal}; }

  bool fan_based() const {
    return kind == Kind::XavierUniform || kind == Kind::XavierNormal ||
           kind == Kind::KaimingUniform || kind == Kind::KaimingNormal;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Constant: return "constant:" + std::to_string(a);
      case Kind::Uniform:
        return "uniform:" + std::to_string(a) + "," + std::to_string(b);
      case Kind::Normal:
        return "normal:" + std::to_string(a) + "," + std::to_string(b);
      case Kind::XavierUniform: return "xavier-uniform";
      case Kind::XavierNormal: return "xavier-normal";
      case Kind::KaimingUniform: return "kaiming-uniform";
      case Kind::KaimingNormal: return "kaiming-normal";
    }
    return "?";
  }

  // Grammar: constant:c | uniform:a,b | normal:mean,std | xavier-uniform |
  // xavier-normal | kaiming-uniform | kaiming-normal.
  static InitDistribution parse(const std::string& text) {
    if (text == "xavier-uniform") return xavier_uniform();
    if (text == "xavier-normal") return xavier_normal();
    if (text == "kaiming-uniform") return kaiming_uniform();
    if (text == "kaiming-normal") return kaiming_normal();
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
      const std::string head = text.substr(0, colon);
      const std::string args = text.substr(colon + 1);
      const auto comma = args.find(',');
      try {
        if (head == "constant" && comma == std::string::npos) {
          return constant(std::stod(args));
        }
        if (head == "uniform" && comma != std::string::npos) {
          return uniform(std::stod(args.substr(0, comma)), std::stod(args.substr(comma + 1)));
        }
        if (head == "normal" && comma != std::string::npos) {
          return normal(std::stod(args.substr(0, comma)), std::stod(args.substr(comma + 1)));
        }
      } catch (const std::invalid_argument&) {
        // fall through to the generic error below
      }
    }
    throw std::invalid_argument(
        "unrecognized distribution '" + text +
        "'; expected constant:c, uniform:a,b, normal:mean,std, "
        "xavier-uniform, xavier-normal, kaiming-uniform, or kaiming-normal");
  }
};

// One draw. Fans are ignored except by the Xavier/Kaiming variants.
inline double init_sample(const InitDistribution& dist, std::size_t fan_in,
                          std::size_t fan_out, std::mt19937_64& rng,
                          ParamSlot slot = ParamSlot::Weight) {
  if (slot == ParamSlot::Mu && dist.fan_based()) {
    throw ForbiddenDistributionError(dist.name());
  }
  if (fan_in < 1 || fan_out < 1) {
    throw std::invalid_argument("init_sample: fans must be >= 1");
  }
  using Kind = InitDistribution::Kind;
  switch (dist.kind) {
    case Kind::Constant: return dist.a;
    case Kind::Uniform:
      return std::uniform_real_distribution<double>(dist.a, dist.b)(rng);
    case Kind::Normal:
      return std::normal_distribution<double>(dist.a, dist.b)(rng);
    case Kind::XavierUniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      return std::uniform_real_distribution<double>(-bound, bound)(rng);
    }
    case Kind::XavierNormal: {
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
      return std::normal_distribution<double>(0.0, stddev)(rng);
    }
    case Kind::KaimingUniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      return std::uniform_real_distribution<double>(-bound, bound)(rng);
    }
    case Kind::KaimingNormal: {
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      return std::normal_distribution<double>(0.0, stddev)(rng);
    }
  }
  throw std::logic_error("init_sample: unhandled kind");
}

}  // namespace fplus
