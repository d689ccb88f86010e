// Command-line driver: core verification, dataset generation, training,
// and validation reports. All outputs are files (binary datasets/models,
// CSV reports) intended for external plotting.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>

#include "swe/dataset.hpp"
#include "swe/nn.hpp"
#include "swe/trainer.hpp"
#include "swe/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1; // invariant/validation failure
constexpr int kExitUsage = 2;   // bad flags / missing inputs

struct VerifyOpts {
  int coarse_elems = 75;
  int fine_elems = 300;
  std::uint64_t seed = 0;
};

int cmd_verify(const VerifyOpts& o) {
  const auto results = swe::run_verification(o.coarse_elems, o.fine_elems, o.seed);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-55s %s  (%s)\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitFailure;
}

struct GendataOpts {
  std::string out;
  int count = 1000;
  int coarse_elems = 75;
  int fine_elems = 300;
  int levels = 10;
  double time_step = 0.01;
  double coriolis = 0.1;
  double gravity = 1.0;
  std::uint64_t seed = 0;
};

int cmd_gendata(const GendataOpts& o) {
  swe::DatasetConfig cfg;
  cfg.coarse_elems = o.coarse_elems;
  cfg.fine_elems = o.fine_elems;
  cfg.num_levels = o.levels;
  cfg.count = o.count;
  cfg.physics = swe::PhysicsParams{o.coriolis, o.gravity, o.time_step};
  cfg.seed = o.seed;

  const swe::Dataset ds = swe::generate_dataset(cfg);
  swe::save_dataset(ds, o.out);

  const swe::Mesh fine = swe::build_mesh(cfg.fine_elems);
  double worst = 0.0;
  for (const auto& tp : ds.pairs)
    worst = std::max(worst, swe::energy_drift(tp.fine, cfg.physics.gravity, fine));
  std::printf("wrote %s: %d samples (%d train / %d validation), D=%d, "
              "max energy drift %.3e\n",
              o.out.c_str(), static_cast<int>(ds.pairs.size()), ds.train_count(),
              static_cast<int>(ds.pairs.size()) - ds.train_count(),
              3 * cfg.fine_elems, worst);
  return kExitOk;
}

struct TrainOpts {
  std::string data;
  std::string out = "model.bin";
  std::string loss_csv = "loss.csv";
  double sigma = 0.0;
  int epochs = 300;
  int batch_size = 16;
  double lr = 1e-3;
  int decay_period = 30;
  double decay_factor = 10.0;
  int s1 = 80;
  int s2 = 640;
  std::uint64_t seed = 0;
  int threads = 1;
  bool desk_scale = false;
};

int cmd_train(const TrainOpts& o) {
  const swe::Dataset ds = swe::load_dataset(o.data);

  swe::TrainConfig cfg;
  cfg.sigma = o.sigma;
  cfg.batch_size = o.batch_size;
  cfg.epochs = o.epochs;
  cfg.base_lr = o.lr;
  cfg.decay_period = o.decay_period;
  cfg.decay_factor = o.decay_factor;
  cfg.seed = o.seed;
  cfg.s1 = o.s1;
  cfg.s2 = o.s2;
  cfg.threads = o.threads;
  if (o.desk_scale) {
    cfg.epochs = 100;
    cfg.decay_period = 10;
    cfg.s1 = 2 * ds.config.num_levels;
    cfg.s2 = 8 * ds.config.num_levels;
  }

  swe::TrainReport report;
  const swe::Model model = swe::train(ds, cfg, &report);
  swe::save_model(model, o.out);
  swe::write_loss_csv(o.loss_csv, report.epochs);
  std::printf("trained %d epochs (sigma=%g): final loss %.6e -> %s, %s\n",
              cfg.epochs, cfg.sigma, report.final_loss, o.out.c_str(),
              o.loss_csv.c_str());
  return kExitOk;
}

struct EvalOpts {
  std::string data;
  std::string model;
  std::string out = "eval.csv";
  int batches = 3;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalOpts& o) {
  const swe::Dataset ds = swe::load_dataset(o.data);
  const swe::Model model = swe::load_model(o.model);
  if (model.field_len != ds.config.fine_elems ||
      model.num_levels != ds.config.num_levels)
    throw std::runtime_error(
        "eval: model shape (N=" + std::to_string(model.num_levels) +
        ", L=" + std::to_string(model.field_len) + ") does not match dataset (N=" +
        std::to_string(ds.config.num_levels) + ", L=" +
        std::to_string(ds.config.fine_elems) + ")");
  const auto records = swe::evaluate(model, ds, o.seed, o.batches, o.batch_size);
  swe::write_eval_csv(o.out, records);
  std::printf("evaluated %d batches of %d -> %s\n", o.batches, o.batch_size,
              o.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural interpolation of coarse shallow-water trajectories onto a "
               "nested fine grid"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file with key=value lines; flags win");

  VerifyOpts vo;
  auto* verify = app.add_subcommand("verify", "Run the core invariant suite");
  verify->add_option("--coarse-elems", vo.coarse_elems, "Coarse mesh elements (default 75)");
  verify->add_option("--fine-elems", vo.fine_elems, "Fine mesh elements (default 300)");
  verify->add_option("--mesh", vo.fine_elems,
                     "Shorthand: fine mesh elements (coarse = fine/4)")
      ->each([&vo](const std::string&) { vo.coarse_elems = 0; });
  verify->add_option("--seed", vo.seed, "Random seed (default 0)");

  GendataOpts go;
  auto* gendata = app.add_subcommand("gendata", "Generate a trajectory-pair dataset");
  gendata->add_option("--out", go.out, "Output dataset path")->required();
  gendata->add_option("--count", go.count, "Number of samples (default 1000)");
  gendata->add_option("--coarse-elems", go.coarse_elems, "Coarse mesh elements (default 75, h=0.04)");
  gendata->add_option("--fine-elems", go.fine_elems, "Fine mesh elements (default 300, h=0.01)");
  gendata->add_option("--levels", go.levels, "Stored time levels N (default 10)");
  gendata->add_option("--time-step", go.time_step, "Time step tau (default 0.01)");
  gendata->add_option("--coriolis", go.coriolis, "Coriolis parameter f (default 0.1)");
  gendata->add_option("--gravity", go.gravity, "Reference pressure g (default 1)");
  gendata->add_option("--seed", go.seed, "Random seed (default 0)");

  TrainOpts to;
  auto* train = app.add_subcommand("train", "Train the neural interpolant");
  train->add_option("--data", to.data, "Dataset file from gendata")->required();
  train->add_option("--out", to.out, "Output model path (default model.bin)");
  train->add_option("--loss-csv", to.loss_csv, "Loss history CSV (default loss.csv)");
  train->add_option("--sigma", to.sigma, "Energy penalty weight (default 0)");
  train->add_option("--epochs", to.epochs, "Training epochs (default 300)");
  train->add_option("--batch", to.batch_size, "Batch size (default 16)");
  train->add_option("--lr", to.lr, "Base learning rate (default 1e-3)");
  train->add_option("--decay-period", to.decay_period, "Epochs per LR decade (default 30)");
  train->add_option("--decay-factor", to.decay_factor, "LR decay factor (default 10)");
  train->add_option("--s1", to.s1, "First hidden channel count (default 80 = 8N)");
  train->add_option("--s2", to.s2, "Second hidden channel count (default 640 = 64N)");
  train->add_option("--seed", to.seed, "Random seed (default 0)");
  train->add_option("--threads", to.threads,
                    "Worker threads; 1 guarantees bitwise determinism (default 1)");
  train->add_flag("--desk-scale", to.desk_scale,
                  "Reduced configuration: 100 epochs, decay period 10, s1=2N, s2=8N");

  EvalOpts eo;
  auto* eval = app.add_subcommand("eval", "Evaluate a model on the validation split");
  eval->add_option("--data", eo.data, "Dataset file from gendata")->required();
  eval->add_option("--model", eo.model, "Model file from train")->required();
  eval->add_option("--out", eo.out, "Evaluation CSV (default eval.csv)");
  eval->add_option("--batches", eo.batches, "Number of random batches (default 3)");
  eval->add_option("--batch", eo.batch_size, "Batch size (default 16)");
  eval->add_option("--seed", eo.seed, "Random seed (default 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*verify) {
      if (vo.coarse_elems == 0) vo.coarse_elems = std::max(2, vo.fine_elems / 4);
      return cmd_verify(vo);
    }
    if (*gendata) return cmd_gendata(go);
    if (*train) return cmd_train(to);
    if (*eval) return cmd_eval(eo);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
