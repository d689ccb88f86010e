#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "swe/dataset.hpp"

using namespace swe;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

DatasetConfig small_config() {
  DatasetConfig cfg;
  cfg.coarse_elems = 15;
  cfg.fine_elems = 60;
  cfg.num_levels = 4;
  cfg.count = 10;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("sample_params is deterministic and respects its supports") {
  Rng a(7, RngStream::Data, 0), b(7, RngStream::Data, 0);
  for (int i = 0; i < 50; ++i) {
    const SampleParams pa = sample_params(a), pb = sample_params(b);
    CHECK(pa.alpha == pb.alpha);
    CHECK(pa.beta == pb.beta);
    CHECK(pa.pos == pb.pos);
    CHECK(pa.wavenumber == pb.wavenumber);
  }

  Rng rng(3);
  double alpha_sum = 0.0;
  bool seen_k[11] = {};
  for (int i = 0; i < 10000; ++i) {
    const SampleParams p = sample_params(rng);
    CHECK(p.alpha >= 0.5);
    CHECK(p.alpha < 2.0);
    CHECK(p.pos >= 1.0);
    CHECK(p.pos < 2.0);
    CHECK(p.wavenumber >= 4);
    CHECK(p.wavenumber <= 10);
    seen_k[p.wavenumber] = true;
    alpha_sum += p.alpha;
  }
  const double alpha_mean = alpha_sum / 10000.0;
  CHECK(alpha_mean > 1.2);
  CHECK(alpha_mean < 1.3);
  for (int k = 4; k <= 10; ++k) CHECK(seen_k[k]);
}

TEST_CASE("initial pressure profile") {
  SampleParams p;
  p.alpha = 1.7;
  p.beta = 100.0;
  p.pos = 1.4;
  p.wavenumber = 6;

  CHECK(initial_pressure(p, p.pos) == Catch::Approx(p.alpha).margin(1e-15));
  // half a unit from the bump: gaussian ~ e^{-25}, sine hits a zero
  CHECK(std::abs(initial_pressure(p, p.pos + 0.5)) < 1e-9);

  // long-double re-evaluation as an independent check
  const Mesh mesh = build_mesh(300);
  for (int m = 0; m < 300; ++m) {
    const long double x = static_cast<long double>(mesh.node(m));
    const long double d = x - static_cast<long double>(p.pos);
    const long double ref =
        static_cast<long double>(p.alpha) *
        (std::exp(static_cast<long double>(-p.beta) * d * d) +
         0.1L * std::sin(2.0L * static_cast<long double>(M_PI) * p.wavenumber * d));
    CHECK(initial_pressure(p, mesh.node(m)) ==
          Catch::Approx(static_cast<double>(ref)).margin(1e-14));
  }
}

TEST_CASE("generate_pair") {
  const MeshPair meshes = make_mesh_pair(build_mesh(75), build_mesh(300));
  const PhysicsParams physics;
  const Stepper coarse_stepper(meshes.coarse, physics);
  const Stepper fine_stepper(meshes.fine, physics);

  SECTION("zero amplitude gives identically zero trajectories") {
    SampleParams p;
    p.alpha = 0.0;
    const TrajectoryPair tp = generate_pair(p, meshes, 9, coarse_stepper, fine_stepper);
    CHECK(tp.coarse_on_fine.levels.cwiseAbs().maxCoeff() == 0.0);
    CHECK(tp.fine.levels.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("level 0 velocities vanish; pressures differ only by sampling") {
    Rng rng(5, RngStream::Data, 0);
    const SampleParams p = sample_params(rng);
    const TrajectoryPair tp = generate_pair(p, meshes, 3, coarse_stepper, fine_stepper);
    CHECK(tp.coarse_on_fine.levels.row(0).segment(0, 600).cwiseAbs().maxCoeff() == 0.0);
    CHECK(tp.fine.levels.row(0).segment(0, 600).cwiseAbs().maxCoeff() == 0.0);
    // both level-0 pressures sample the same analytic profile
    const Eigen::VectorXd pc = tp.coarse_on_fine.levels.row(0).segment(600, 300);
    const Eigen::VectorXd pf = tp.fine.levels.row(0).segment(600, 300);
    CHECK((pc - pf).cwiseAbs().maxCoeff() < 0.5); // same shape, different sampling
    CHECK((pc - pf).cwiseAbs().maxCoeff() > 0.0);
  }

  SECTION("dispersion: the coarse/fine gap grows over time for k=10") {
    SampleParams p;
    p.alpha = 1.0;
    p.beta = 100.0;
    p.pos = 1.5;
    p.wavenumber = 10;
    const TrajectoryPair tp = generate_pair(p, meshes, 9, coarse_stepper, fine_stepper);
    const int last = tp.fine.num_levels() - 1;
    const double gap0 =
        (tp.coarse_on_fine.levels.row(0) - tp.fine.levels.row(0)).norm() /
        tp.fine.levels.row(0).norm();
    const double gap_last =
        (tp.coarse_on_fine.levels.row(last) - tp.fine.levels.row(last)).norm() /
        tp.fine.levels.row(last).norm();
    CHECK(gap_last > gap0);
  }
}

TEST_CASE("generate_dataset determinism and split") {
  const DatasetConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);
  CHECK(static_cast<int>(ds.pairs.size()) == 10);
  CHECK(ds.train_count() == 7);

  const std::string p1 = "ds_a.bin", p2 = "ds_b.bin";
  save_dataset(ds, p1);
  save_dataset(generate_dataset(cfg), p2);
  CHECK(slurp(p1) == slurp(p2));

  SECTION("save/load round-trips exactly") {
    const Dataset back = load_dataset(p1);
    CHECK(back.config == ds.config);
    REQUIRE(back.pairs.size() == ds.pairs.size());
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
      CHECK(back.pairs[i].params.alpha == ds.pairs[i].params.alpha);
      CHECK(back.pairs[i].params.wavenumber == ds.pairs[i].params.wavenumber);
      CHECK(back.pairs[i].coarse_on_fine.levels == ds.pairs[i].coarse_on_fine.levels);
      CHECK(back.pairs[i].fine.levels == ds.pairs[i].fine.levels);
    }
  }

  SECTION("manifest sidecar is written") {
    const std::string man = slurp(p1 + ".manifest");
    CHECK(man.find("count=10") != std::string::npos);
    CHECK(man.find("train_count=7") != std::string::npos);
    CHECK(man.find("seed=1") != std::string::npos);
  }

  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove((p1 + ".manifest").c_str());
  std::remove((p2 + ".manifest").c_str());
}

TEST_CASE("stored trajectories conserve energy") {
  const DatasetConfig cfg = small_config();
  const Dataset ds = generate_dataset(cfg);
  const Mesh fine = build_mesh(cfg.fine_elems);
  for (const auto& tp : ds.pairs) {
    CHECK(energy_drift(tp.fine, cfg.physics.gravity, fine) <= 1e-10);
    CHECK(energy_drift(tp.coarse_on_fine, cfg.physics.gravity, fine) <= 1e-10);
    CHECK(tp.coarse_on_fine.levels.rows() == tp.fine.levels.rows());
    CHECK(tp.coarse_on_fine.levels.cols() == tp.fine.levels.cols());
  }
}

TEST_CASE("loader rejects garbage") {
  const std::string path = "ds_bad.bin";
  std::ofstream(path, std::ios::binary) << "NOPE not a dataset";
  CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_dataset("does_not_exist.bin"), std::runtime_error);
}
