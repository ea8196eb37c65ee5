#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "fplus/checkpoint.hpp"
#include "fplus/train.hpp"
#include "test_support.hpp"

using namespace fplus;

namespace {

// Reference convolution oracle: plain quadruple-nested loops over an
// explicit index arithmetic, written before conv2d_forward existed.
std::vector<double> conv_reference(const std::vector<double>& kernels,
                                   std::size_t oc, std::size_t ic, std::size_t kh,
                                   std::size_t kw, const std::vector<double>& image,
                                   std::size_t h, std::size_t w) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  std::vector<double> out(oc * oh * ow, 0.0);
  for (std::size_t o = 0; o < oc; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < ic; ++c) {
          for (std::size_t p = 0; p < kh; ++p) {
            for (std::size_t q = 0; q < kw; ++q) {
              acc += kernels[((o * ic + c) * kh + p) * kw + q] *
                     image[(c * h + y + p) * w + x + q];
            }
          }
        }
        out[(o * oh + y) * ow + x] = acc;
      }
    }
  }
  return out;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& e : v) e = testing::normal_away_from(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("init_sample") {
  std::mt19937_64 rng(99);

  SECTION("constant") {
    CHECK(init_sample(InitDistribution::constant(1.0), 3, 4, rng) == 1.0);
  }

  SECTION("uniform stays in its half-open interval") {
    const InitDistribution d = InitDistribution::uniform(0.5, 1.5);
    for (int i = 0; i < 10000; ++i) {
      const double v = init_sample(d, 1, 1, rng);
      CHECK(v >= 0.5);
      CHECK(v < 1.5);
    }
  }

  SECTION("xavier normal variance 2/(fan_in+fan_out) within 5%") {
    const InitDistribution d = InitDistribution::xavier_normal();
    double sum = 0.0, sum_sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double v = init_sample(d, 100, 100, rng);
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(var == Catch::Approx(0.01).epsilon(0.05));
  }

  SECTION("kaiming uniform bound sqrt(6/fan_in)") {
    const InitDistribution d = InitDistribution::kaiming_uniform();
    const double bound = std::sqrt(6.0 / 50.0);
    double max_seen = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double v = init_sample(d, 50, 10, rng);
      CHECK(std::abs(v) <= bound);
      max_seen = std::max(max_seen, std::abs(v));
    }
    CHECK(max_seen > 0.9 * bound);  // actually fills the interval
  }

  SECTION("fan-based distributions are refused for the mu slot") {
    for (const InitDistribution& d :
         {InitDistribution::xavier_uniform(), InitDistribution::xavier_normal(),
          InitDistribution::kaiming_uniform(), InitDistribution::kaiming_normal()}) {
      CHECK_THROWS_AS(init_sample(d, 10, 10, rng, ParamSlot::Mu),
                      ForbiddenDistributionError);
      CHECK_NOTHROW(init_sample(d, 10, 10, rng, ParamSlot::Lambda));
      CHECK_NOTHROW(init_sample(d, 10, 10, rng, ParamSlot::Weight));
    }
    CHECK_NOTHROW(init_sample(InitDistribution::normal(1.0, 0.1), 10, 10, rng,
                              ParamSlot::Mu));
  }

  SECTION("grammar parsing") {
    CHECK(InitDistribution::parse("constant:1").kind == InitDistribution::Kind::Constant);
    const InitDistribution u = InitDistribution::parse("uniform:0.5,1.5");
    CHECK(u.a == 0.5);
    CHECK(u.b == 1.5);
    const InitDistribution n = InitDistribution::parse("normal:1,0.3");
    CHECK(n.a == 1.0);
    CHECK(n.b == 0.3);
    CHECK(InitDistribution::parse("xavier-uniform").fan_based());
    CHECK(InitDistribution::parse("kaiming-normal").fan_based());
    CHECK_THROWS_AS(InitDistribution::parse("gamma:1,2"), std::invalid_argument);
    CHECK_THROWS_AS(InitDistribution::parse("uniform:2,1"), std::invalid_argument);
    CHECK_THROWS_AS(InitDistribution::parse("normal:0,-1"), std::invalid_argument);
  }

  SECTION("invalid fans") {
    CHECK_THROWS_AS(init_sample(InitDistribution::xavier_uniform(), 0, 3, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("dense_forward") {
  SECTION("identity weights pass input through") {
    Tensor w({2, 2}, {1, 0, 0, 1});
    Tensor b({2}, {0, 0});
    Tensor x({1, 2}, {3.0, -4.0});
    Tensor y = dense_forward(w, b, x);
    CHECK(y.data()[0] == 3.0);
    CHECK(y.data()[1] == -4.0);
  }

  SECTION("hand arithmetic") {
    Tensor w({1, 1}, {2.0});
    Tensor b({1}, {1.0});
    Tensor x({1, 1}, {3.0});
    CHECK(dense_forward(w, b, x).data()[0] == 7.0);
  }

  SECTION("gradient check") {
    std::mt19937_64 rng(31);
    Tensor w = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    Tensor x = random_tensor({4, 3}, rng);
    auto build = [&] { return sum(mul(dense_forward(w, b, x), dense_forward(w, b, x))); };
    const auto r = testing::gradcheck(build, {w, b, x});
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("conv2d_forward") {
  SECTION("1x1 unit kernel is the identity") {
    Tensor k({1, 1, 1, 1}, {1.0});
    Tensor x({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = conv2d_forward(k, x);
    CHECK(y.shape() == Shape{1, 2, 3});
    for (std::size_t i = 0; i < 6; ++i) CHECK(y.data()[i] == x.data()[i]);
  }

  SECTION("2x2 all-ones kernel sums the window") {
    Tensor k({1, 1, 2, 2}, {1, 1, 1, 1});
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor y = conv2d_forward(k, x);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.data()[0] == 10.0);
  }

  SECTION("lenet first-layer shape arithmetic") {
    std::mt19937_64 rng(5);
    Tensor k = random_tensor({6, 1, 5, 5}, rng, false);
    Tensor x = random_tensor({1, 28, 28}, rng, false);
    CHECK(conv2d_forward(k, x).shape() == Shape{6, 24, 24});
  }

  SECTION("matches the quadruple-loop reference on random shapes") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t ic = 1 + trial % 3, oc = 1 + (trial / 2) % 4;
      const std::size_t h = 5 + trial % 4, w = 4 + trial % 5;
      const std::size_t kh = 1 + trial % 3, kw = 1 + (trial + 1) % 3;
      Tensor k = random_tensor({oc, ic, kh, kw}, rng, false);
      Tensor x = random_tensor({ic, h, w}, rng, false);
      Tensor y = conv2d_forward(k, x);
      const std::vector<double> want =
          conv_reference({k.data().begin(), k.data().end()}, oc, ic, kh, kw,
                         {x.data().begin(), x.data().end()}, h, w);
      REQUIRE(y.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(y.data()[i] == Catch::Approx(want[i]).epsilon(1e-12));
      }
    }
  }

  SECTION("batched path agrees with the per-image path") {
    std::mt19937_64 rng(7);
    Tensor k = random_tensor({3, 2, 2, 2}, rng, false);
    Tensor batch = random_tensor({4, 2, 5, 5}, rng, false);
    Tensor y = conv2d_forward(k, batch);
    CHECK(y.shape() == Shape{4, 3, 4, 4});
    const std::size_t image_stride = 2 * 5 * 5;
    const std::size_t out_stride = 3 * 4 * 4;
    for (std::size_t b = 0; b < 4; ++b) {
      std::vector<double> img(batch.data().begin() + b * image_stride,
                              batch.data().begin() + (b + 1) * image_stride);
      Tensor single = conv2d_forward(k, Tensor({2, 5, 5}, std::move(img)));
      for (std::size_t i = 0; i < out_stride; ++i) {
        CHECK(y.data()[b * out_stride + i] == single.data()[i]);
      }
    }
  }

  SECTION("kernel larger than input is rejected") {
    Tensor k({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_WITH(conv2d_forward(k, x),
                      Catch::Matchers::ContainsSubstring("larger than input"));
  }

  SECTION("gradient check, batched") {
    std::mt19937_64 rng(8);
    Tensor k = random_tensor({2, 2, 3, 3}, rng);
    Tensor x = random_tensor({2, 2, 5, 5}, rng);
    auto build = [&] {
      Tensor y = conv2d_forward(k, x);
      return sum(mul(y, y));
    };
    const auto r = testing::gradcheck(build, {k, x});
    INFO("worst " << r.max_rel_error << " over " << r.checked);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("maxpool2d") {
  SECTION("constant input stays constant") {
    Tensor x = Tensor::full({1, 4, 4}, 3.25);
    Tensor y = maxpool2d(x);
    CHECK(y.shape() == Shape{1, 2, 2});
    for (double v : y.data()) CHECK(v == 3.25);
  }

  SECTION("hand max") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    CHECK(maxpool2d(x).data()[0] == 4.0);
  }

  SECTION("on ties the gradient flows to exactly one element") {
    Tensor x({1, 2, 2}, {5, 5, 5, 5}, true);
    backward(sum(maxpool2d(x)));
    int nonzero = 0;
    double total = 0.0;
    for (double g : x.grad()) {
      nonzero += g != 0.0;
      total += g;
    }
    CHECK(nonzero == 1);
    CHECK(total == 1.0);
    CHECK(x.grad()[0] == 1.0);  // first occurrence in row-major scan
  }

  SECTION("odd dimensions are rejected") {
    Tensor x({1, 3, 4}, std::vector<double>(12, 0.0));
    CHECK_THROWS_AS(maxpool2d(x), std::invalid_argument);
  }

  SECTION("gradient check away from ties") {
    std::mt19937_64 rng(9);
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    auto build = [&] {
      Tensor y = maxpool2d(x);
      return sum(mul(y, y));
    };
    const auto r = testing::gradcheck(build, {x});
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("batchnorm1d") {
  SECTION("training output is standardized before the affine transform") {
    std::mt19937_64 rng(10);
    Tensor x = random_tensor({16, 3}, rng, false);
    Tensor gamma = Tensor::full({3}, 1.0, true);
    Tensor beta = Tensor::zeros({3}, true);
    RunningStats stats(3);
    Tensor y = batchnorm1d_forward(x, gamma, beta, stats, true);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < 16; ++i) mean += y.data()[i * 3 + j];
      mean /= 16.0;
      for (std::size_t i = 0; i < 16; ++i) {
        const double d = y.data()[i * 3 + j] - mean;
        var += d * d;
      }
      var /= 16.0;
      CHECK(std::abs(mean) < 1e-12);
      CHECK(var == Catch::Approx(1.0).epsilon(1e-3));  // eps in the denominator
    }
  }

  SECTION("eval mode with unit running stats is the identity") {
    Tensor x({2, 2}, {1.0, -2.0, 3.0, 0.5});
    Tensor gamma = Tensor::full({2}, 1.0, true);
    Tensor beta = Tensor::zeros({2}, true);
    RunningStats stats(2);  // mean 0, var 1
    stats.eps = 0.0;
    Tensor y = batchnorm1d_forward(x, gamma, beta, stats, false);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
  }

  SECTION("training mode needs a real batch") {
    Tensor x({1, 2}, {1.0, 2.0});
    Tensor gamma = Tensor::full({2}, 1.0, true);
    Tensor beta = Tensor::zeros({2}, true);
    RunningStats stats(2);
    CHECK_THROWS_AS(batchnorm1d_forward(x, gamma, beta, stats, true),
                    std::invalid_argument);
  }

  SECTION("running stats move toward batch statistics") {
    Tensor x({4, 1}, {10.0, 12.0, 8.0, 10.0});
    Tensor gamma = Tensor::full({1}, 1.0, true);
    Tensor beta = Tensor::zeros({1}, true);
    RunningStats stats(1);
    batchnorm1d_forward(x, gamma, beta, stats, true);
    CHECK(stats.mean[0] == Catch::Approx(0.9 * 0.0 + 0.1 * 10.0));
    CHECK(stats.var[0] == Catch::Approx(0.9 * 1.0 + 0.1 * 2.0));
  }

  SECTION("gradient check through batch statistics") {
    std::mt19937_64 rng(12);
    Tensor x = random_tensor({6, 4}, rng);
    Tensor gamma = random_tensor({4}, rng);
    Tensor beta = random_tensor({4}, rng);
    RunningStats stats(4);
    auto build = [&] {
      RunningStats fresh = stats;  // keep the check side-effect free
      Tensor y = batchnorm1d_forward(x, gamma, beta, fresh, true);
      return sum(mul(y, y));
    };
    const auto r = testing::gradcheck(build, {x, gamma, beta});
    INFO("worst " << r.max_rel_error);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("softmax cross entropy") {
  SECTION("uniform logits give log(k)") {
    Tensor logits({2, 4}, std::vector<double>(8, 0.0), true);
    Tensor loss = softmax_cross_entropy(logits, {0, 3});
    CHECK(loss.item() == Catch::Approx(std::log(4.0)).epsilon(1e-12));
  }

  SECTION("gradient check") {
    std::mt19937_64 rng(13);
    Tensor logits = random_tensor({5, 3}, rng);
    const std::vector<int> labels = {0, 2, 1, 1, 0};
    auto build = [&] { return softmax_cross_entropy(logits, labels); };
    const auto r = testing::gradcheck(build, {logits});
    CHECK(r.max_rel_error < 1e-6);
  }

  SECTION("label validation") {
    Tensor logits({1, 3}, {0.0, 0.0, 0.0});
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1}), std::invalid_argument);
  }
}

TEST_CASE("optimizers") {
  auto make_param = [](double w0) {
    Tensor t = Tensor::scalar(w0, true);
    return t;
  };

  SECTION("plain sgd descends") {
    Tensor w = make_param(1.0);
    SgdOptimizer opt({{"w", w, false}}, 0.0);
    w.zero_grad();
    backward(scale(w, 0.5));  // d/dw = 0.5
    opt.step(0.1);
    CHECK(w.data()[0] == Catch::Approx(0.95).epsilon(1e-15));
  }

  SECTION("sgd momentum hand iterate") {
    Tensor w = make_param(0.0);
    SgdOptimizer opt({{"w", w, false}}, 0.9);
    for (double expected : {-0.1, -0.29}) {
      w.zero_grad();
      backward(w);  // gradient 1
      opt.step(0.1);
      CHECK(w.data()[0] == Catch::Approx(expected).epsilon(1e-12));
    }
  }

  SECTION("adam first step moves by about lr") {
    Tensor w = make_param(2.0);
    AdamOptimizer opt({{"w", w, false}});
    w.zero_grad();
    backward(scale(w, 0.5));
    opt.step(0.001);
    CHECK(std::abs(2.0 - w.data()[0]) == Catch::Approx(0.001).epsilon(1e-6));
  }

  SECTION("missing gradient is an error") {
    Tensor w = Tensor::scalar(1.0, false);
    CHECK_THROWS_AS(SgdOptimizer({{"w", w, false}}, 0.0), std::invalid_argument);
  }

  SECTION("positive-clamped parameters never cross the floor") {
    Tensor lambda = make_param(0.001);
    SgdOptimizer opt({{"lambda", lambda, true}}, 0.0);
    lambda.zero_grad();
    backward(lambda);  // gradient 1; step would take it to -0.099
    opt.step(0.1);
    CHECK(lambda.data()[0] == kPositiveFloor);
  }

  SECTION("invalid momentum") {
    Tensor w = make_param(1.0);
    CHECK_THROWS_AS(SgdOptimizer({{"w", w, false}}, 1.0), std::invalid_argument);
  }
}

TEST_CASE("learning-rate schedules") {
  SECTION("step decay: 0.1 every 10 epochs") {
    const LrSchedule s = StepDecay{0.1, 10};
    CHECK(lr_at(s, 0.001, 0) == 0.001);
    CHECK(lr_at(s, 0.001, 9) == 0.001);
    CHECK(lr_at(s, 0.001, 10) == Catch::Approx(0.0001).epsilon(1e-15));
    CHECK(lr_at(s, 0.001, 25) == Catch::Approx(0.00001).epsilon(1e-12));
  }

  SECTION("halving every two epochs") {
    const LrSchedule s = StepDecay{0.5, 2};
    CHECK(lr_at(s, 0.001, 1) == 0.001);
    CHECK(lr_at(s, 0.001, 2) == 0.0005);
    CHECK(lr_at(s, 0.001, 5) == Catch::Approx(0.000125).epsilon(1e-15));
  }

  SECTION("exponential: base 0.98") {
    const LrSchedule s = ExponentialDecay{0.98};
    CHECK(lr_at(s, 0.001, 0) == 0.001);
    CHECK(lr_at(s, 0.001, 1) == Catch::Approx(0.00098).epsilon(1e-15));
    CHECK(lr_at(s, 0.001, 30) == Catch::Approx(0.001 * std::pow(0.98, 30)).epsilon(1e-15));
  }

  SECTION("multistep: 0.2 at epochs 15/30/40") {
    const LrSchedule s = MultiStep{0.2, {15, 30, 40}};
    CHECK(lr_at(s, 0.01, 0) == 0.01);
    CHECK(lr_at(s, 0.01, 14) == 0.01);
    CHECK(lr_at(s, 0.01, 15) == Catch::Approx(0.002).epsilon(1e-15));
    CHECK(lr_at(s, 0.01, 35) == Catch::Approx(0.0004).epsilon(1e-15));
    CHECK(lr_at(s, 0.01, 45) == Catch::Approx(0.00008).epsilon(1e-15));
  }

  SECTION("nonincreasing in epoch") {
    for (const LrSchedule& s : {LrSchedule(StepDecay{0.3, 3}),
                                LrSchedule(ExponentialDecay{0.9}),
                                LrSchedule(MultiStep{0.5, {2, 5, 7}})}) {
      double previous = std::numeric_limits<double>::infinity();
      for (int e = 0; e < 20; ++e) {
        const double lr = lr_at(s, 1.0, e);
        CHECK(lr <= previous);
        CHECK(lr > 0.0);
        previous = lr;
      }
    }
  }

  SECTION("validation") {
    CHECK_THROWS_AS(validate(LrSchedule(StepDecay{1.5, 2})), std::invalid_argument);
    CHECK_THROWS_AS(validate(LrSchedule(ExponentialDecay{0.0})), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(ExponentialDecay{0.9}, 1.0, -1), std::invalid_argument);
  }
}

TEST_CASE("end-to-end gradient check: dense pfplus model on a 4-sample batch") {
  ModelSpec spec{ModelKind::Mlp2Layer, ActivationKind::make_pfplus(1.3, 0.8), true};
  Network net(spec, {1, 1, 3}, 3, /*seed=*/21);
  std::mt19937_64 rng(22);
  Tensor batch = random_tensor({4, 1, 1, 3}, rng, false);
  const std::vector<int> labels = {0, 2, 1, 0};

  auto build = [&] {
    return softmax_cross_entropy(net.forward(batch, true), labels);
  };
  std::vector<Tensor> leaves;
  for (NamedParam& p : net.parameters()) leaves.push_back(p.tensor);
  const auto r = testing::gradcheck(build, leaves, 1e-6);
  INFO("worst relative error " << r.max_rel_error << " over " << r.checked << " probes");
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("train_model") {
  SECTION("zero epochs yields only the initial parameters") {
    Dataset blobs = synth_blobs(10, 2, 0.1, 3);
    ModelSpec spec{ModelKind::Mlp2Layer, ActivationKind::make_pfplus(1.0, 1.0), true};
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrajectoryLog log = train_model(spec, blobs, blobs, cfg);
    CHECK(log.epochs.empty());
    REQUIRE(log.initial_act_params.size() == 1);
    CHECK(log.initial_act_params[0].first == 1.0);
  }

  SECTION("separable blobs reach 99% training accuracy") {
    Dataset blobs = synth_blobs(50, 2, 0.1, 4);
    ModelSpec spec{ModelKind::Mlp2Layer, ActivationKind::fplus()};
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    cfg.lr0 = 0.01;
    cfg.optimizer = AdamChoice{};
    cfg.seed = 5;
    const TrajectoryLog log = train_model(spec, blobs, blobs, cfg);
    CHECK(log.epochs.back().train_accuracy >= 0.99);
  }

  SECTION("identical configs give identical trajectories") {
    Dataset blobs = synth_blobs(20, 3, 0.5, 6);
    ModelSpec spec{ModelKind::Mlp2Layer, ActivationKind::make_pfplus(2.0, 2.0), true};
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.lr0 = 0.01;
    cfg.seed = 11;
    std::ostringstream a, b;
    train_model(spec, blobs, blobs, cfg).write_csv(a);
    train_model(spec, blobs, blobs, cfg).write_csv(b);
    CHECK(a.str() == b.str());
    CHECK(a.str().find("epoch,split,loss,accuracy,lambda_1,mu_1") == 0);
  }

  SECTION("lambda and mu stay above the floor throughout training") {
    Dataset blobs = synth_blobs(20, 2, 2.0, 8);
    ModelSpec spec{ModelKind::Mlp2Layer, ActivationKind::make_pfplus(0.01, 0.01), true};
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.lr0 = 0.05;  // aggressive enough to push against the constraint
    cfg.seed = 12;
    const TrajectoryLog log = train_model(spec, blobs, blobs, cfg);
    for (const EpochRecord& r : log.epochs) {
      for (const auto& [lambda, mu] : r.act_params) {
        CHECK(lambda >= kPositiveFloor);
        CHECK(mu >= kPositiveFloor);
      }
    }
  }

  SECTION("model/dataset incompatibility is reported") {
    Dataset blobs = synth_blobs(5, 2, 0.1, 3);
    ModelSpec spec{ModelKind::Lenet5Like, ActivationKind::relu()};
    TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(train_model(spec, blobs, blobs, cfg), std::invalid_argument);
  }

  SECTION("batch-norm toggle trains the mlp") {
    Dataset blobs = synth_blobs(30, 2, 0.2, 9);
    ModelSpec spec{ModelKind::Mlp2Layer, ActivationKind::fplus()};
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 10;
    cfg.lr0 = 0.01;
    cfg.seed = 13;
    cfg.batch_norm = true;
    const TrajectoryLog log = train_model(spec, blobs, blobs, cfg);
    CHECK(log.epochs.back().train_accuracy > 0.9);
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(77);
  std::vector<NamedParam> params;
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({2}, rng);
  params.push_back({"layer.w", a, false});
  params.push_back({"act.lambda", b, true});

  const auto path = std::filesystem::temp_directory_path() / "fplus_ckpt_test.fplk";
  save_checkpoint(path, params);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].first == "layer.w");
  CHECK(loaded[0].second.shape() == Shape{3, 4});
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(loaded[0].second.data()[i] == a.data()[i]);
  }
  CHECK(loaded[1].first == "act.lambda");

  // corrupt magic is rejected
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE then some bytes";
  }
  CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("magic"));
  std::filesystem::remove(path);
}

TEST_CASE("network structure") {
  SECTION("lenet has exactly four activation layers and two pfplus scalars each") {
    ModelSpec spec{ModelKind::Lenet5Like, ActivationKind::make_pfplus(1.0, 1.0), true};
    Network net(spec, {1, 28, 28}, 10, 1);
    CHECK(net.activation_layers().size() == 4);
    int learnable = 0;
    for (const NamedParam& p : net.parameters()) {
      learnable += p.clamp_positive;
    }
    CHECK(learnable == 8);  // (lambda, mu) x 4 layers
  }

  SECTION("mlp has one activation layer") {
    ModelSpec spec{ModelKind::Mlp2Layer, ActivationKind::make_pfplus(1.0, 1.0), true};
    Network net(spec, {1, 1, 2}, 2, 1);
    CHECK(net.activation_layers().size() == 1);
  }

  SECTION("forward output shape is [batch, classes]") {
    ModelSpec spec{ModelKind::Lenet5Like, ActivationKind::fplus()};
    Network net(spec, {1, 28, 28}, 10, 2);
    Tensor batch = Tensor::zeros({3, 1, 28, 28});
    CHECK(net.forward(batch, false).shape() == Shape{3, 10});
  }
}
