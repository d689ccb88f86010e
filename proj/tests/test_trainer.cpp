#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "oracle.hpp"
#include "swe/trainer.hpp"
#include "swe/verify.hpp"

using namespace swe;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Eigen::MatrixXd random_levels(int n, int d, Rng& rng) {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

bool params_equal(const Model& a, const Model& b) {
  for (std::size_t i = 0; i < a.nets.size(); ++i)
    for (std::size_t l = 0; l < a.nets[i].layers.size(); ++l) {
      if (a.nets[i].layers[l].w != b.nets[i].layers[l].w) return false;
      if (a.nets[i].layers[l].b != b.nets[i].layers[l].b) return false;
    }
  return true;
}

Dataset tiny_dataset(int count = 10, std::uint64_t seed = 1) {
  DatasetConfig cfg;
  cfg.coarse_elems = 15;
  cfg.fine_elems = 60;
  cfg.num_levels = 4;
  cfg.count = count;
  cfg.seed = seed;
  return generate_dataset(cfg);
}

double dataset_mean_loss(const Model& model, const Dataset& ds, double sigma) {
  const Mesh fine = build_mesh(ds.config.fine_elems);
  const FeWorkspace ws = make_fe_workspace(fine, ds.config.physics.gravity);
  const Eigen::MatrixXd A = flow_map(fine, ds.config.physics).A;
  double acc = 0.0;
  for (int i = 0; i < ds.train_count(); ++i) {
    const Eigen::MatrixXd pred = nn_forward(model, A, ds.pairs[i].coarse_on_fine.levels);
    acc += total_loss(pred, ds.pairs[i].fine.levels, ds.pairs[i].coarse_on_fine.levels,
                      sigma, ws);
  }
  return acc / ds.train_count();
}

}  // namespace

TEST_CASE("fe_l2_sq_loss") {
  const Mesh mesh = build_mesh(10);
  const FeWorkspace ws = make_fe_workspace(mesh, 1.0);
  const int D = 30;

  SECTION("zero error gives zero loss and zero gradient") {
    Rng rng(1);
    const Eigen::MatrixXd x = random_levels(3, D, rng);
    Eigen::MatrixXd grad;
    CHECK(fe_l2_sq_loss(x, x, ws, &grad) == 0.0);
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("constant pressure error of c on one level costs 3 c^2") {
    Eigen::MatrixXd pred = Eigen::MatrixXd::Zero(1, D);
    pred.row(0).segment(20, 10).setConstant(0.9);
    const Eigen::MatrixXd target = Eigen::MatrixXd::Zero(1, D);
    CHECK(fe_l2_sq_loss(pred, target, ws) == Catch::Approx(3.0 * 0.81));
  }

  SECTION("random case matches brute-force quadrature, summed over levels") {
    Rng rng(2);
    const Eigen::MatrixXd pred = random_levels(3, D, rng);
    const Eigen::MatrixXd target = random_levels(3, D, rng);
    double ref = 0.0;
    for (int n = 0; n < 3; ++n) {
      FieldP1 eu{(pred.row(n) - target.row(n)).segment(0, 10).transpose()};
      FieldP1 ev{(pred.row(n) - target.row(n)).segment(10, 10).transpose()};
      FieldP0 ep{(pred.row(n) - target.row(n)).segment(20, 10).transpose()};
      ref += oracle::gauss4(
          [&](double x) {
            const double a = eval_p1(eu, mesh, x), b = eval_p1(ev, mesh, x),
                         c = eval_p0(ep, mesh, x);
            return a * a + b * b + c * c;
          },
          0.0, kDomainLength, 10 * 32);
    }
    CHECK(fe_l2_sq_loss(pred, target, ws) == Catch::Approx(ref).epsilon(1e-12));
  }

  SECTION("shape mismatch throws") {
    CHECK_THROWS_AS(
        fe_l2_sq_loss(Eigen::MatrixXd::Zero(2, D), Eigen::MatrixXd::Zero(3, D), ws),
        std::invalid_argument);
  }
}

TEST_CASE("energy_penalty") {
  const Mesh mesh = build_mesh(12);
  const PhysicsParams params;
  const FeWorkspace ws = make_fe_workspace(mesh, params.gravity);
  const int D = 36;

  SECTION("an energy-conserving prediction has (near) zero penalty") {
    Rng rng(3);
    const State ic = random_state(mesh, rng);
    const Trajectory traj = simulate(ic, 3, mesh, params);
    const double scale = energy_of_flat(ic.flat(), params.gravity, mesh);
    CHECK(energy_penalty(traj.levels, traj.levels, ws) <= 1e-10 * scale);
  }

  SECTION("zero prediction pays the reference energy") {
    Rng rng(4);
    const Eigen::MatrixXd x_c = random_levels(4, D, rng);
    const double e0 = energy_of_flat(x_c.row(0).transpose(), params.gravity, mesh);
    CHECK(energy_penalty(Eigen::MatrixXd::Zero(4, D), x_c, ws) ==
          Catch::Approx(e0).epsilon(1e-14));
  }

  SECTION("random case matches a direct per-level oracle") {
    Rng rng(5);
    const Eigen::MatrixXd pred = random_levels(4, D, rng);
    const Eigen::MatrixXd x_c = random_levels(4, D, rng);
    const double e_ref = energy_of_flat(x_c.row(0).transpose(), params.gravity, mesh);
    double ref = 0.0;
    for (int n = 0; n < 4; ++n)
      ref += std::abs(
          energy_of_flat(pred.row(n).transpose(), params.gravity, mesh) - e_ref);
    ref /= 4.0;
    CHECK(energy_penalty(pred, x_c, ws) == Catch::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("total_loss composes data term and weighted penalty") {
  const Mesh mesh = build_mesh(8);
  const FeWorkspace ws = make_fe_workspace(mesh, 1.0);
  Rng rng(6);
  const Eigen::MatrixXd pred = random_levels(3, 24, rng);
  const Eigen::MatrixXd target = random_levels(3, 24, rng);
  const Eigen::MatrixXd x_c = random_levels(3, 24, rng);

  const double data = fe_l2_sq_loss(pred, target, ws);
  const double pen = energy_penalty(pred, x_c, ws);
  CHECK(total_loss(pred, target, x_c, 0.0, ws) == data);
  CHECK(total_loss(pred, target, x_c, 2.5, ws) ==
        Catch::Approx(data + 2.5 * pen).epsilon(1e-15));

  Eigen::MatrixXd g_total, g_data, g_pen;
  (void)fe_l2_sq_loss(pred, target, ws, &g_data);
  (void)energy_penalty(pred, x_c, ws, &g_pen);
  (void)total_loss(pred, target, x_c, 2.5, ws, &g_total);
  CHECK((g_total - (g_data + 2.5 * g_pen)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("adam") {
  Model m = make_model(2, 6, 2, 4);
  Rng rng(7);
  init_params(m, rng);
  AdamState st = make_adam_state(m);

  SECTION("zero gradient leaves parameters unchanged") {
    const Model before = m;
    Model zeros = m;
    zero_params(zeros);
    adam_step(m, zeros, st, 1e-3);
    CHECK(params_equal(m, before));
  }

  SECTION("first step moves each touched parameter by about lr") {
    Model grads = m;
    zero_params(grads);
    grads.nets[0].layers[0].w(0, 0) = 0.37; // any nonzero value
    const double before = m.nets[0].layers[0].w(0, 0);
    adam_step(m, grads, st, 1e-3);
    // bias-corrected first step is lr * g/(|g| + eps') ~ lr
    CHECK(std::abs((before - m.nets[0].layers[0].w(0, 0)) - 1e-3) < 1e-6);
  }

  SECTION("ten steps match an independent scalar Adam") {
    Model grads = m;
    zero_params(grads);
    grads.nets[1].layers[2].b[1] = 1.0;
    double p = m.nets[1].layers[2].b[1];
    double mo = 0.0, vo = 0.0;
    for (int t = 1; t <= 10; ++t) {
      adam_step(m, grads, st, 1e-2);
      mo = 0.9 * mo + 0.1 * 1.0;
      vo = 0.999 * vo + 0.001 * 1.0;
      const double mhat = mo / (1.0 - std::pow(0.9, t));
      const double vhat = vo / (1.0 - std::pow(0.999, t));
      p -= 1e-2 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(m.nets[1].layers[2].b[1] == Catch::Approx(p).epsilon(1e-12));
    }
    // untouched parameters never move
    CHECK(m.nets[0].layers[0].w(0, 0) ==
          Catch::Approx(m.nets[0].layers[0].w(0, 0)));
  }
}

TEST_CASE("learning-rate schedule decays by decades") {
  TrainConfig cfg;
  CHECK(lr_schedule(0, cfg) == 1e-3);
  CHECK(lr_schedule(29, cfg) == 1e-3);
  CHECK(lr_schedule(30, cfg) == Catch::Approx(1e-4).epsilon(1e-14));
  CHECK(lr_schedule(60, cfg) == Catch::Approx(1e-5).epsilon(1e-14));
  CHECK(lr_schedule(299, cfg) == Catch::Approx(1e-12).epsilon(1e-12));
  for (int e = 1; e < 300; ++e) CHECK(lr_schedule(e, cfg) <= lr_schedule(e - 1, cfg));
}

TEST_CASE("training on all-zero samples is a fixed point") {
  DatasetConfig dcfg;
  dcfg.coarse_elems = 5;
  dcfg.fine_elems = 10;
  dcfg.num_levels = 3;
  dcfg.count = 2;
  dcfg.seed = 3;
  Dataset ds = generate_dataset(dcfg);
  for (auto& tp : ds.pairs) {
    tp.coarse_on_fine.levels.setZero();
    tp.fine.levels.setZero();
  }

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 1;
  cfg.s1 = 2;
  cfg.s2 = 4;
  cfg.seed = 11;
  TrainReport report;
  const Model trained = train(ds, cfg, &report);

  CHECK(report.final_loss == 0.0);
  for (const auto& r : report.epochs) CHECK(r.mean_loss == 0.0);

  // zero input and zero targets give zero gradients, so the parameters
  // must still be the seeded initialization
  Model fresh = make_model(dcfg.num_levels, dcfg.fine_elems, cfg.s1, cfg.s2);
  Rng init_rng(cfg.seed, RngStream::Init);
  init_params(fresh, init_rng);
  CHECK(params_equal(trained, fresh));
}

TEST_CASE("short training run reduces the loss") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  cfg.s1 = 2;
  cfg.s2 = 4;
  cfg.seed = 5;
  TrainReport report;
  const Model trained = train(ds, cfg, &report);
  REQUIRE(report.epochs.size() == 8);
  CHECK(report.epochs.back().mean_loss < report.epochs.front().mean_loss);

  // the trained model also beats the fresh initialization on the full
  // training split, evaluated outside the loop
  Model fresh = make_model(ds.config.num_levels, ds.config.fine_elems, cfg.s1, cfg.s2);
  Rng init_rng(cfg.seed, RngStream::Init);
  init_params(fresh, init_rng);
  CHECK(dataset_mean_loss(trained, ds, cfg.sigma) <
        dataset_mean_loss(fresh, ds, cfg.sigma));
}

TEST_CASE("a tiny Adam step along the gradient does not increase the loss") {
  const Dataset ds = tiny_dataset(3, 9);
  for (int trial = 0; trial < 5; ++trial) {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = ds.train_count();
    cfg.base_lr = 1e-6;
    cfg.s1 = 2;
    cfg.s2 = 4;
    cfg.seed = 100 + static_cast<std::uint64_t>(trial);
    Model fresh = make_model(ds.config.num_levels, ds.config.fine_elems, cfg.s1, cfg.s2);
    Rng init_rng(cfg.seed, RngStream::Init);
    init_params(fresh, init_rng);
    const double before = dataset_mean_loss(fresh, ds, 0.0);

    const Model stepped = train(ds, cfg, nullptr);
    const double after = dataset_mean_loss(stepped, ds, 0.0);
    CHECK(after <= before + 1e-9 * std::max(1.0, before));
  }
}

TEST_CASE("evaluate") {
  const Dataset ds = tiny_dataset(12, 2); // 8 train / 4 validation

  SECTION("produces num_batches x num_levels records") {
    const Model m = make_model(ds.config.num_levels, ds.config.fine_elems, 2, 4);
    const auto recs = evaluate(m, ds, 0, 3, 4);
    REQUIRE(recs.size() == 12);
    for (int b = 0; b < 3; ++b)
      for (int n = 0; n < 4; ++n) {
        CHECK(recs[b * 4 + n].batch == b);
        CHECK(recs[b * 4 + n].time_level == n);
      }
  }

  SECTION("zero-weight model matches a closed-form oracle") {
    const Model m = make_model(ds.config.num_levels, ds.config.fine_elems, 2, 4);
    const Mesh fine = build_mesh(ds.config.fine_elems);
    const FeWorkspace ws = make_fe_workspace(fine, ds.config.physics.gravity);
    const Eigen::MatrixXd A = flow_map(fine, ds.config.physics).A;
    const auto recs = evaluate(m, ds, 7, 1, 4);

    // reproduce the batch selection with the same seeded shuffle
    std::vector<int> idx(4);
    std::iota(idx.begin(), idx.end(), ds.train_count());
    Rng rng(7, RngStream::EvalBatch, 0);
    rng.shuffle(idx);

    for (int n = 0; n < 4; ++n) {
      double l2 = 0.0, dev_sum = 0.0;
      std::vector<double> devs;
      for (int s = 0; s < 4; ++s) {
        const auto& tp = ds.pairs[idx[s]];
        // zero weights: prediction = x_c + flow trajectory of x_c level 0
        Eigen::VectorXd flow = tp.coarse_on_fine.levels.row(0).transpose();
        for (int k = 0; k < n; ++k) flow = A * flow;
        const Eigen::VectorXd pred =
            tp.coarse_on_fine.levels.row(n).transpose() + flow;
        const Eigen::VectorXd err = pred - tp.fine.levels.row(n).transpose();
        l2 += trainer_detail::level_l2_sq(ws, err, nullptr);
        const double d =
            trainer_detail::level_energy(ws, pred, nullptr) -
            trainer_detail::level_energy(
                ws, tp.coarse_on_fine.levels.row(0).transpose(), nullptr);
        devs.push_back(d);
        dev_sum += d;
      }
      CHECK(recs[n].l2sq_error == Catch::Approx(l2 / 4.0).epsilon(1e-12));
      const double mean = dev_sum / 4.0;
      CHECK(recs[n].energy_dev_mean == Catch::Approx(mean).margin(1e-14));
      double var = 0.0;
      for (double d : devs) var += (d - mean) * (d - mean);
      CHECK(recs[n].energy_dev_std ==
            Catch::Approx(std::sqrt(var / 4.0)).margin(1e-14));
    }
  }

  SECTION("throws when the validation split is smaller than a batch") {
    const Model m = make_model(ds.config.num_levels, ds.config.fine_elems, 2, 4);
    CHECK_THROWS_AS(evaluate(m, ds, 0, 1, 5), std::invalid_argument);
  }
}

TEST_CASE("training and evaluation are bitwise deterministic") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.s1 = 2;
  cfg.s2 = 4;
  cfg.seed = 21;

  TrainReport r1, r2;
  const Model m1 = train(ds, cfg, &r1);
  const Model m2 = train(ds, cfg, &r2);
  CHECK(params_equal(m1, m2));

  save_model(m1, "det_a.bin");
  save_model(m2, "det_b.bin");
  CHECK(slurp("det_a.bin") == slurp("det_b.bin"));
  std::remove("det_a.bin");
  std::remove("det_b.bin");

  write_loss_csv("det_a.csv", r1.epochs);
  write_loss_csv("det_b.csv", r2.epochs);
  CHECK(slurp("det_a.csv") == slurp("det_b.csv"));
  std::remove("det_a.csv");
  std::remove("det_b.csv");

  write_eval_csv("det_e1.csv", evaluate(m1, ds, 3, 2, 3));
  write_eval_csv("det_e2.csv", evaluate(m2, ds, 3, 2, 3));
  CHECK(slurp("det_e1.csv") == slurp("det_e2.csv"));
  std::remove("det_e1.csv");
  std::remove("det_e2.csv");
}

TEST_CASE("loss CSV layout") {
  std::vector<EpochRecord> recs(2);
  recs[0] = {0, 1e-3, 0.5, 0.4, 0.1};
  recs[1] = {1, 1e-3, 0.25, 0.2, 0.05};
  write_loss_csv("layout.csv", recs);
  const std::string text = slurp("layout.csv");
  CHECK(text.find("epoch,lr,mean_loss,data_term,penalty_term") == 0);
  CHECK(text.find("\n0,0.001,0.5,0.40000000000000002,0.10000000000000001\n") !=
        std::string::npos);
  std::remove("layout.csv");
}
