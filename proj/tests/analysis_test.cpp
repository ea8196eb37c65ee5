#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fplus/analysis.hpp"

using namespace fplus;

namespace {

// Simpson quadrature of E[act(Z)], Z ~ N(0,1): the independent oracle the
// Monte-Carlo estimator is checked against.
double mean_by_quadrature(const ActivationKind& kind) {
  const int n = 1 << 18;
  const double a = -12.0, b = 12.0, h = (b - a) / n;
  auto f = [&](double z) { return activation_eval(kind, z) * gauss_pdf(z); };
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

DerivationCoefficients case1(double alpha, double omega1) {
  return {alpha, 1.0, omega1, -omega1, -alpha};
}

DerivationCoefficients case2(double alpha, double omega1) {
  return {alpha, -1.0, omega1, -omega1, alpha};
}

}  // namespace

TEST_CASE("verify_conditions classifies the canonical activations") {
  SECTION("fplus passes all six") {
    const PropertyReport r = verify_conditions(ActivationKind::fplus());
    for (const ConditionResult& c : r.conditions) CHECK(c.pass);
    CHECK(r.overall);
  }

  SECTION("relu fails exactly condition IV with witness 0") {
    const PropertyReport r = verify_conditions(ActivationKind::relu());
    CHECK(r.conditions[0].pass);
    CHECK(r.conditions[1].pass);
    CHECK(r.conditions[2].pass);
    CHECK_FALSE(r.conditions[3].pass);
    CHECK(r.conditions[3].witness == 0.0);
    CHECK(r.conditions[3].residual == Catch::Approx(1.0));  // slopes 1 vs 0
    CHECK(r.conditions[4].pass);
    CHECK(r.conditions[5].pass);
    CHECK_FALSE(r.overall);
  }

  SECTION("sigmoid fails condition II with f(0)=0.5") {
    const PropertyReport r = verify_conditions(ActivationKind::make_sigmoid());
    CHECK_FALSE(r.conditions[1].pass);
    CHECK(r.conditions[1].residual == Catch::Approx(0.5));
    // and, being bounded, it is also not convex down
    CHECK_FALSE(r.conditions[5].pass);
    CHECK_FALSE(r.overall);
  }

  SECTION("tanh crosses the origin but is not convex") {
    const PropertyReport r = verify_conditions(ActivationKind::make_tanh());
    CHECK(r.conditions[1].pass);
    CHECK(r.conditions[4].pass);
    CHECK_FALSE(r.conditions[5].pass);
  }

  SECTION("precondition violations") {
    auto f = [](double x) { return x; };
    const std::vector<double> eps = default_epsilons();
    CHECK_THROWS_AS(verify_conditions(f, std::vector<double>{}, eps, 1e-6),
                    std::invalid_argument);
    const std::vector<double> xs = {0.0, 1.0};
    CHECK_THROWS_AS(verify_conditions(f, xs, std::vector<double>{1e-3, 1e-2}, 1e-6),
                    std::invalid_argument);
  }
}

TEST_CASE("pfplus passes the condition suite on the full parameter grid") {
  for (double lambda : {0.01, 0.1, 1.0, 10.0}) {
    for (double mu : {0.01, 0.1, 1.0, 10.0}) {
      const PropertyReport r =
          verify_conditions(ActivationKind::make_pfplus(lambda, mu));
      INFO("lambda=" << lambda << " mu=" << mu << "\n" << r.to_kv_text());
      CHECK(r.overall);
    }
  }
}

TEST_CASE("property report serializes to flat key-value text") {
  const PropertyReport r = verify_conditions(ActivationKind::relu());
  const std::string text = r.to_kv_text();
  CHECK(text.find("condition=I pass=1") != std::string::npos);
  CHECK(text.find("condition=IV pass=0") != std::string::npos);
  CHECK(text.find("witness=0") != std::string::npos);
  CHECK(text.find("overall=0") != std::string::npos);
}

TEST_CASE("coefficient reduction") {
  SECTION("spec case-1 tuple reduces to fplus") {
    const PfplusParams p = coefficients_to_pfplus({1.0, 1.0, 1.0, -1.0, -1.0});
    CHECK(p.lambda == 1.0);
    CHECK(p.mu == 1.0);
  }

  SECTION("spec case-2 tuple") {
    const PfplusParams p = coefficients_to_pfplus({-2.0, -1.0, -3.0, 3.0, -2.0});
    CHECK(p.lambda == 6.0);
    CHECK(p.mu == 3.0);
  }

  SECTION("each violated constraint is cited by number") {
    auto formula_of = [](DerivationCoefficients c) {
      try {
        coefficients_to_pfplus(c);
      } catch (const CoefficientError& e) {
        return e.formula();
      }
      return 0;
    };
    CHECK(formula_of({1.0, 1.0, 1.0, 1.0, -1.0}) == 5);   // omega1 != -omega2
    CHECK(formula_of({1.0, 2.0, 1.0, -1.0, -1.0}) == 3);  // beta not +-1
    CHECK(formula_of({1.0, 1.0, 1.0, -1.0, 1.0}) == 2);   // f(0) != 0
    CHECK(formula_of({1.0, 1.0, -1.0, 1.0, -1.0}) == 1);  // pole on the wrong side
    CHECK(formula_of({-1.0, 1.0, 1.0, -1.0, 1.0}) == 7);  // alpha*omega1 <= 0
  }

  SECTION("1000 random valid tuples per case round-trip within 1e-12") {
    std::mt19937_64 rng(5150);
    std::uniform_real_distribution<double> mag(0.05, 5.0);
    std::uniform_real_distribution<double> xs(-10.0, 10.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const double alpha = mag(rng), omega = mag(rng);
      for (const DerivationCoefficients& c :
           {case1(alpha, omega), case2(-alpha, -omega)}) {
        const PfplusParams p = coefficients_to_pfplus(c);
        CHECK(p.lambda > 0.0);
        CHECK(p.mu > 0.0);
        for (int i = 0; i < 100; ++i) {
          const double x = xs(rng);
          CHECK(std::abs(c.eval(x) - pfplus_eval(x, p)) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("taylor residual") {
  SECTION("pinned points") {
    const TaylorResult a = taylor_residual(0.5, 3);
    CHECK(a.partial_sum == 0.875);
    CHECK(a.residual == 0.125);

    const TaylorResult b = taylor_residual(0.0, 7);
    CHECK(b.partial_sum == 0.0);
    CHECK(b.residual == 0.0);

    const TaylorResult c = taylor_residual(-0.5, 3);
    CHECK(c.partial_sum == -0.375);
    CHECK(c.residual == Catch::Approx(1.0 / 24.0).epsilon(1e-12));  // |-1/3 + 0.375|
  }

  SECTION("telescoped residual equals the naive difference while it is computable") {
    for (double x : {0.9, 0.5, 0.1, -0.1, -0.5, -0.9}) {
      for (int n = 1; n <= 8; ++n) {
        const TaylorResult r = taylor_residual(x, n);
        const double naive = std::abs(x / (1.0 - x) - r.partial_sum);
        CHECK(std::abs(r.residual - naive) < 1e-12);
      }
    }
  }

  SECTION("residual obeys the geometric tail bound and shrinks with n") {
    for (double x : {0.9, 0.5, 0.1, -0.1, -0.5, -0.9}) {
      double previous = std::numeric_limits<double>::infinity();
      for (int n = 1; n <= 40; ++n) {
        const TaylorResult r = taylor_residual(x, n);
        CHECK(r.residual <= taylor_tail_bound(x, n));
        CHECK(r.residual <= previous + 1e-15);
        previous = r.residual;
      }
    }
  }

  SECTION("domain errors") {
    CHECK_THROWS_AS(taylor_residual(1.0, 3), std::domain_error);
    CHECK_THROWS_AS(taylor_residual(-1.5, 3), std::domain_error);
    CHECK_THROWS_AS(taylor_residual(0.5, 0), std::invalid_argument);
  }
}

TEST_CASE("output mean statistics") {
  SECTION("relu matches the closed form 1/sqrt(2*pi)") {
    const double closed_form = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
    const double mc = output_mean_stat(ActivationKind::relu(), 1000000, 42);
    CHECK(std::abs(mc - closed_form) < 2e-3);
  }

  SECTION("tanh mean vanishes by symmetry") {
    const double mc = output_mean_stat(ActivationKind::make_tanh(), 1000000, 42);
    CHECK(std::abs(mc) < 2e-3);
  }

  SECTION("fplus mean matches quadrature and sits between tanh and relu") {
    const double quad = mean_by_quadrature(ActivationKind::fplus());
    const double mc = output_mean_stat(ActivationKind::fplus(), 1000000, 42);
    CHECK(std::abs(mc - quad) < 2e-3);
    const double relu = output_mean_stat(ActivationKind::relu(), 1000000, 42);
    const double tanh_mean = output_mean_stat(ActivationKind::make_tanh(), 1000000, 42);
    CHECK(std::abs(mc) > std::abs(tanh_mean));
    CHECK(std::abs(mc) < relu);
    // regression anchor, frozen from this seed on this toolchain
    CHECK(mc == Catch::Approx(0.20753088241832549).epsilon(1e-12));
  }

  SECTION("determinism and sample floor") {
    CHECK(output_mean_stat(ActivationKind::fplus(), 100000, 9) ==
          output_mean_stat(ActivationKind::fplus(), 100000, 9));
    CHECK_THROWS_AS(output_mean_stat(ActivationKind::fplus(), 99999, 9),
                    std::invalid_argument);
  }
}

TEST_CASE("saturation limit") {
  CHECK(saturation_limit({1.0, 1.0}) == -1.0);
  CHECK(saturation_limit({2.0, 4.0}) == -0.5);
  CHECK(saturation_limit({0.2, 10.0}) == Catch::Approx(-0.02));
  CHECK_THROWS_AS(saturation_limit({0.0, 1.0}), std::invalid_argument);
  // the limit really is the infimum: approached from above, never attained
  for (double x : {-1e3, -1e6, -1e9}) {
    const double y = pfplus_eval(x, {2.0, 4.0});
    CHECK(y > -0.5);
    CHECK(y < -0.5 + 2e-3);
  }
}
