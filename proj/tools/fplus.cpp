// Command-line front end: property verification, lambda/mu grid sweeps,
// initialization studies, training runs, Taylor-tail queries, and output
// statistics. Machine output is CSV; everything seeded is run-to-run
// deterministic.
//
// Exit codes: 0 success, 1 property failure, 2 usage/config error,
// 3 data error, 4 numeric divergence.

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fplus/activations.hpp"
#include "fplus/analysis.hpp"
#include "fplus/checkpoint.hpp"
#include "fplus/data.hpp"
#include "fplus/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct DataFlags {
  std::string dir;
  std::size_t synth_per_class = 0;  // 0 = read IDX files
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  std::uint64_t subset_seed = 1;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
  cmd->add_option("--data", flags.dir,
                  "dataset directory with MNIST-style IDX files "
                  "(default: $FPLUS_DATA_DIR)");
  cmd->add_option("--synth", flags.synth_per_class,
                  "generate a synthetic digit dataset with this many "
                  "training examples per class instead of reading files");
  cmd->add_option("--train-per-class", flags.train_per_class,
                  "stratified training subset size per class (0 = all)");
  cmd->add_option("--test-per-class", flags.test_per_class,
                  "stratified test subset size per class (0 = all)");
  cmd->add_option("--subset-seed", flags.subset_seed, "seed for subset selection");
}

std::pair<fplus::Dataset, fplus::Dataset> resolve_datasets(const DataFlags& flags) {
  using namespace fplus;
  if (flags.synth_per_class > 0) {
    const std::size_t test_n =
        flags.test_per_class ? flags.test_per_class : flags.synth_per_class / 2 + 1;
    Dataset train = synth_digits(flags.synth_per_class, flags.subset_seed);
    Dataset test = synth_digits(test_n, flags.subset_seed ^ 0xd1f2c3b4a5ull);
    return {std::move(train), std::move(test)};
  }
  std::string dir = flags.dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("FPLUS_DATA_DIR")) dir = env;
  }
  if (dir.empty()) {
    throw DataError(
        "no dataset: pass --data DIR (or set FPLUS_DATA_DIR) pointing at "
        "train-images-idx3-ubyte[.gz], train-labels-idx1-ubyte[.gz], "
        "t10k-images-idx3-ubyte[.gz], t10k-labels-idx1-ubyte[.gz]; "
        "or pass --synth N for generated digits");
  }
  Dataset train = load_idx_dataset(dir, mnist_train_files());
  Dataset test = load_idx_dataset(dir, mnist_test_files());
  if (flags.train_per_class) {
    train = stratified_subset(train, flags.train_per_class, flags.subset_seed);
  }
  if (flags.test_per_class) {
    test = stratified_subset(test, flags.test_per_class, flags.subset_seed + 1);
  }
  return {std::move(train), std::move(test)};
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw fplus::DataError("cannot open output file " + path);
  return file;
}

fplus::ActivationKind build_activation(const std::string& name, double lambda,
                                       double mu) {
  auto kind = fplus::activation_from_name(name, lambda, mu);
  if (!kind) {
    std::ostringstream os;
    os << "unknown activation '" << name << "'; known:";
    for (const std::string& n : fplus::activation_names()) os << ' ' << n;
    throw std::invalid_argument(os.str());
  }
  return *kind;
}

// --- verify ----------------------------------------------------------------

int run_verify(const std::string& name, double lambda, double mu, double tol) {
  using namespace fplus;
  const ActivationKind kind = build_activation(name, lambda, mu);
  const PropertyReport report = verify_conditions(kind, tol);
  std::cout << report.to_kv_text();
  if (report.overall) {
    std::cout << "PASS: all six conditions hold for " << name << "\n";
    return kExitOk;
  }
  for (std::size_t i = 0; i < 6; ++i) {
    const ConditionResult& c = report.conditions[i];
    if (!c.pass) {
      std::cout << "FAIL: condition " << PropertyReport::condition_name(i)
                << " witness x=" << c.witness << " residual=" << c.residual << "\n";
    }
  }
  return kExitPropertyFailure;
}

// --- sweep -----------------------------------------------------------------

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) values.push_back(std::stod(item));
  }
  if (values.empty()) throw std::invalid_argument("empty grid: '" + text + "'");
  return values;
}

struct SweepCell {
  double lambda = 0.0;
  double mu = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
};

int run_sweep(const DataFlags& data_flags, const std::string& lambda_grid,
              const std::string& mu_grid, int epochs, int batch, double lr,
              std::uint64_t seed, unsigned jobs, const std::string& out_path) {
  using namespace fplus;
  const std::vector<double> lambdas = parse_grid(lambda_grid);
  const std::vector<double> mus = parse_grid(mu_grid);
  const auto [train, test] = resolve_datasets(data_flags);

  std::vector<SweepCell> cells;
  for (double lambda : lambdas) {
    for (double mu : mus) cells.push_back({lambda, mu});
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      SweepCell& cell = cells[i];
      ModelSpec spec{ModelKind::Lenet5Like,
                     ActivationKind::make_pfplus(cell.lambda, cell.mu)};
      TrainConfig cfg;
      cfg.epochs = epochs;
      cfg.batch_size = batch;
      cfg.lr0 = lr;
      cfg.optimizer = AdamChoice{};
      cfg.seed = seed;
      const TrajectoryLog log = train_model(spec, train, test, cfg);
      cell.loss = log.final_train_loss();
      cell.accuracy = log.final_test_accuracy();
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::ofstream file;
  std::ostream& os = open_output(file, out_path);
  os << "lambda,mu,loss,accuracy\n";
  const SweepCell* best = &cells.front();
  for (const SweepCell& cell : cells) {
    os << cell.lambda << ',' << cell.mu << ',' << cell.loss << ',' << cell.accuracy << '\n';
    if (cell.accuracy > best->accuracy) best = &cell;
  }
  os << "# best lambda=" << best->lambda << " mu=" << best->mu
     << " accuracy=" << best->accuracy << '\n';
  return kExitOk;
}

// --- init-study ------------------------------------------------------------

int run_init_study(const DataFlags& data_flags, const std::string& lambda_dist,
                   const std::string& mu_dist, const std::string& model, int epochs,
                   int batch, double lr, std::uint64_t seed,
                   const std::string& out_path) {
  using namespace fplus;
  const InitDistribution ld = InitDistribution::parse(lambda_dist);
  const InitDistribution md = InitDistribution::parse(mu_dist);
  if (md.fan_based()) throw ForbiddenDistributionError(md.name());

  const auto [train, test] = resolve_datasets(data_flags);
  ModelSpec spec;
  spec.kind = model == "mlp" ? ModelKind::Mlp2Layer : ModelKind::Lenet5Like;
  spec.activation = ActivationKind::make_pfplus(1.0, 1.0);
  spec.learnable_activation = true;
  spec.lambda_init = ld;
  spec.mu_init = md;
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.lr0 = lr;
  cfg.optimizer = AdamChoice{};
  cfg.seed = seed;
  const TrajectoryLog log = train_model(spec, train, test, cfg);

  std::ofstream file;
  std::ostream& os = open_output(file, out_path);
  log.write_csv(os);
  os << "# lambda-dist=" << ld.name() << " mu-dist=" << md.name()
     << " final_loss=" << log.final_train_loss()
     << " final_accuracy=" << log.final_test_accuracy() << '\n';
  return kExitOk;
}

// --- train -----------------------------------------------------------------

int run_train(const DataFlags& data_flags, const std::string& model,
              const std::string& act, double lambda, double mu, bool learnable,
              int epochs, int batch, double lr, const std::string& optimizer,
              double momentum, const std::string& lr_decay, double decay_gamma,
              int decay_period, double decay_base, const std::vector<int>& milestones,
              const std::string& batch_norm, std::uint64_t seed,
              const std::string& out_path, const std::string& checkpoint_path) {
  using namespace fplus;
  const auto [train, test] = resolve_datasets(data_flags);

  ModelSpec spec;
  spec.kind = model == "mlp" ? ModelKind::Mlp2Layer : ModelKind::Lenet5Like;
  spec.activation = build_activation(act, lambda, mu);
  spec.learnable_activation = learnable;

  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.lr0 = lr;
  cfg.seed = seed;
  if (batch_norm == "on") {
    cfg.batch_norm = true;
  } else if (batch_norm != "off") {
    throw std::invalid_argument("--batch-norm must be 'on' or 'off'");
  }
  if (optimizer == "sgd") {
    cfg.optimizer = SgdChoice{momentum};
  } else if (optimizer == "adam") {
    cfg.optimizer = AdamChoice{};
  } else {
    throw std::invalid_argument("--optimizer must be 'adam' or 'sgd'");
  }
  if (lr_decay == "step") {
    cfg.schedule = StepDecay{decay_gamma, decay_period};
  } else if (lr_decay == "exp") {
    cfg.schedule = ExponentialDecay{decay_base};
  } else if (lr_decay == "multistep") {
    cfg.schedule = MultiStep{decay_gamma, milestones};
  } else {
    throw std::invalid_argument("--lr-decay must be 'step', 'exp', or 'multistep'");
  }

  std::optional<Network> net;
  const TrajectoryLog log = train_model(spec, train, test, cfg, &net);

  std::ofstream file;
  std::ostream& os = open_output(file, out_path);
  log.write_csv(os);
  if (!checkpoint_path.empty()) {
    save_checkpoint(checkpoint_path, net->parameters());
  }
  std::cout << "final test accuracy: " << log.final_test_accuracy() << "\n";
  return kExitOk;
}

// --- taylor / stats ----------------------------------------------------------

int run_taylor(double x, int n) {
  const fplus::TaylorResult r = fplus::taylor_residual(x, n);
  std::cout << "partial_sum=" << r.partial_sum << " residual=" << r.residual
            << " bound=" << fplus::taylor_tail_bound(x, n) << "\n";
  return kExitOk;
}

int run_stats(const std::string& act, double lambda, double mu,
              std::size_t samples, std::uint64_t seed) {
  const fplus::ActivationKind kind = build_activation(act, lambda, mu);
  std::cout << "mean=" << fplus::output_mean_stat(kind, samples, seed) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FPLUS/PFPLUS activation laboratory"};
  app.require_subcommand(1);

  // verify
  auto* verify = app.add_subcommand("verify", "certify the six derivation conditions");
  std::string verify_act;
  double verify_lambda = 1.0, verify_mu = 1.0, verify_tol = 1e-6;
  verify->add_option("activation", verify_act, "activation name")->required();
  verify->add_option("--lambda", verify_lambda, "pfplus amplitude factor");
  verify->add_option("--mu", verify_mu, "pfplus scale factor");
  verify->add_option("--tol", verify_tol, "seam/origin tolerance");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "fixed lambda/mu grid study");
  DataFlags sweep_data;
  add_data_flags(sweep, sweep_data);
  std::string sweep_lambda = "0.01,0.1,1,10", sweep_mu = "0.01,0.1,1,10";
  int sweep_epochs = 5, sweep_batch = 64;
  double sweep_lr = 0.001;
  std::uint64_t sweep_seed = 0;
  unsigned sweep_jobs = 1;
  std::string sweep_out;
  sweep->add_option("--lambda-grid", sweep_lambda, "comma-separated lambda values");
  sweep->add_option("--mu-grid", sweep_mu, "comma-separated mu values");
  sweep->add_option("--epochs", sweep_epochs, "epochs per cell");
  sweep->add_option("--batch", sweep_batch, "batch size");
  sweep->add_option("--lr", sweep_lr, "initial learning rate");
  sweep->add_option("--seed", sweep_seed, "training seed");
  sweep->add_option("--jobs", sweep_jobs, "parallel workers");
  sweep->add_option("--out", sweep_out, "CSV output path (default stdout)");

  // init-study
  auto* study = app.add_subcommand("init-study", "learnable-parameter initialization study");
  DataFlags study_data;
  add_data_flags(study, study_data);
  std::string study_lambda = "constant:1", study_mu = "constant:1", study_model = "lenet";
  int study_epochs = 5, study_batch = 64;
  double study_lr = 0.001;
  std::uint64_t study_seed = 0;
  std::string study_out;
  study->add_option("--lambda-dist", study_lambda, "lambda init distribution");
  study->add_option("--mu-dist", study_mu, "mu init distribution (Xavier/Kaiming refused)");
  study->add_option("--model", study_model, "lenet or mlp")
      ->check(CLI::IsMember({"lenet", "mlp"}));
  study->add_option("--epochs", study_epochs, "epochs");
  study->add_option("--batch", study_batch, "batch size");
  study->add_option("--lr", study_lr, "initial learning rate");
  study->add_option("--seed", study_seed, "training seed");
  study->add_option("--out", study_out, "CSV output path (default stdout)");

  // train
  auto* train = app.add_subcommand("train", "single training run");
  DataFlags train_data;
  add_data_flags(train, train_data);
  std::string train_model_name = "lenet", train_act = "fplus";
  double train_lambda = 1.0, train_mu = 1.0;
  bool train_learnable = false;
  int train_epochs = 5, train_batch = 64;
  double train_lr = 0.001;
  std::string train_optimizer = "adam";
  double train_momentum = 0.9;
  std::string train_decay = "exp";
  double train_decay_gamma = 0.1;
  int train_decay_period = 10;
  double train_decay_base = 0.98;
  std::vector<int> train_milestones = {15, 30, 40};
  std::string train_bn = "off";
  std::uint64_t train_seed = 0;
  std::string train_out, train_checkpoint;
  train->add_option("--model", train_model_name, "lenet or mlp")
      ->check(CLI::IsMember({"lenet", "mlp"}));
  train->add_option("--act", train_act, "activation name");
  train->add_option("--lambda", train_lambda, "pfplus amplitude factor");
  train->add_option("--mu", train_mu, "pfplus scale factor");
  train->add_flag("--learnable", train_learnable, "learn activation parameters");
  train->add_option("--epochs", train_epochs, "epochs");
  train->add_option("--batch", train_batch, "batch size");
  train->add_option("--lr", train_lr, "initial learning rate");
  train->add_option("--optimizer", train_optimizer, "adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}));
  train->add_option("--momentum", train_momentum, "sgd momentum");
  train->add_option("--lr-decay", train_decay, "step, exp, or multistep")
      ->check(CLI::IsMember({"step", "exp", "multistep"}));
  train->add_option("--decay-gamma", train_decay_gamma, "step/multistep factor");
  train->add_option("--decay-period", train_decay_period, "step period in epochs");
  train->add_option("--decay-base", train_decay_base, "exponential base");
  train->add_option("--milestones", train_milestones, "multistep milestones");
  train->add_option("--batch-norm", train_bn, "on or off");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--out", train_out, "trajectory CSV path (default stdout)");
  train->add_option("--checkpoint", train_checkpoint, "checkpoint output path");

  // taylor
  auto* taylor = app.add_subcommand("taylor", "geometric-series tail of the negative branch");
  double taylor_x = 0.5;
  int taylor_n = 10;
  taylor->add_option("--x", taylor_x, "expansion point, |x| < 1")->required();
  taylor->add_option("--n", taylor_n, "partial-sum order");

  // stats
  auto* stats = app.add_subcommand("stats", "Monte-Carlo output mean under N(0,1) input");
  std::string stats_act = "fplus";
  double stats_lambda = 1.0, stats_mu = 1.0;
  std::size_t stats_samples = 1000000;
  std::uint64_t stats_seed = 0;
  stats->add_option("--act", stats_act, "activation name");
  stats->add_option("--lambda", stats_lambda, "pfplus amplitude factor");
  stats->add_option("--mu", stats_mu, "pfplus scale factor");
  stats->add_option("--samples", stats_samples, "sample count (>= 1e5)");
  stats->add_option("--seed", stats_seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) return run_verify(verify_act, verify_lambda, verify_mu, verify_tol);
    if (sweep->parsed()) {
      return run_sweep(sweep_data, sweep_lambda, sweep_mu, sweep_epochs, sweep_batch,
                       sweep_lr, sweep_seed, sweep_jobs, sweep_out);
    }
    if (study->parsed()) {
      return run_init_study(study_data, study_lambda, study_mu, study_model,
                            study_epochs, study_batch, study_lr, study_seed, study_out);
    }
    if (train->parsed()) {
      return run_train(train_data, train_model_name, train_act, train_lambda, train_mu,
                       train_learnable, train_epochs, train_batch, train_lr,
                       train_optimizer, train_momentum, train_decay, train_decay_gamma,
                       train_decay_period, train_decay_base, train_milestones, train_bn,
                       train_seed, train_out, train_checkpoint);
    }
    if (taylor->parsed()) return run_taylor(taylor_x, taylor_n);
    if (stats->parsed()) {
      return run_stats(stats_act, stats_lambda, stats_mu, stats_samples, stats_seed);
    }
  } catch (const fplus::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const fplus::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
