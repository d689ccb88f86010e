#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swe/binio.hpp"
#include "swe/dynamics.hpp"
#include "swe/rng.hpp"
#include "swe/transfer.hpp"

namespace swe {

// Randomized initial-condition parameters:
//   alpha ~ U(0.5, 2), beta ~ N(100, 6), pos ~ U(1, 2), k ~ U_int{4..10}
struct SampleParams {
  double alpha = 1.0;
  double beta = 100.0;
  double pos = 1.5;
  int wavenumber = 4;
};

inline SampleParams sample_params(Rng& rng) {
  SampleParams p;
  p.alpha = rng.uniform(0.5, 2.0);
  p.beta = rng.normal(100.0, 6.0);
  p.pos = rng.uniform(1.0, 2.0);
  p.wavenumber = rng.uniform_int(4, 10);
  return p;
}

// p(0,x) = alpha (exp(-beta (x-pos)^2) + sin(2 pi k (x-pos)) / 10).
// The bump is not wrapped periodically: with pos in [1,2] and width ~0.1
// its value at the domain seam is below 1e-40. The sine term is exactly
// periodic for integer k.
inline double initial_pressure(const SampleParams& p, double x) {
  const double d = x - p.pos;
  return p.alpha *
         (std::exp(-p.beta * d * d) + 0.1 * std::sin(2.0 * M_PI * p.wavenumber * d));
}

// One training sample: the prolonged coarse run x_c and the native fine
// run x_f, both N x D on the fine mesh.
struct TrajectoryPair {
  Trajectory coarse_on_fine; // x_c
  Trajectory fine;           // x_f
  SampleParams params;
};

struct DatasetConfig {
  int coarse_elems = 75;
  int fine_elems = 300;
  int num_levels = 10; // N: stored time levels (initial condition + N-1 steps)
  int count = 1000;
  PhysicsParams physics;
  std::uint64_t seed = 0;

  bool operator==(const DatasetConfig& o) const {
    return coarse_elems == o.coarse_elems && fine_elems == o.fine_elems &&
           num_levels == o.num_levels && count == o.count && seed == o.seed &&
           physics.coriolis == o.physics.coriolis &&
           physics.gravity == o.physics.gravity &&
           physics.time_step == o.physics.time_step;
  }
};

struct Dataset {
  DatasetConfig config;
  std::vector<TrajectoryPair> pairs;

  // First 70% (by generation index) train, remainder validation.
  int train_count() const {
    return static_cast<int>(0.7 * static_cast<double>(pairs.size()));
  }
};

inline TrajectoryPair generate_pair(const SampleParams& params, const MeshPair& pair,
                                    int n_steps, const Stepper& coarse_stepper,
                                    const Stepper& fine_stepper) {
  const auto ic = [&params](double x) { return initial_pressure(params, x); };

  State coarse_ic = zero_state(pair.coarse);
  coarse_ic.p = interpolate_p0(ic, pair.coarse);
  State fine_ic = zero_state(pair.fine);
  fine_ic.p = interpolate_p0(ic, pair.fine);

  TrajectoryPair out;
  out.params = params;
  out.coarse_on_fine =
      prolong_trajectory(simulate(coarse_ic, n_steps, coarse_stepper), pair);
  out.fine = simulate(fine_ic, n_steps, fine_stepper);
  return out;
}

inline Dataset generate_dataset(const DatasetConfig& config) {
  if (config.count < 1)
    throw std::invalid_argument("generate_dataset: count must be >= 1");
  const MeshPair meshes =
      make_mesh_pair(build_mesh(config.coarse_elems), build_mesh(config.fine_elems));
  const Stepper coarse_stepper(meshes.coarse, config.physics);
  const Stepper fine_stepper(meshes.fine, config.physics);
  const int n_steps = config.num_levels - 1;
  const double g = config.physics.gravity;

  Dataset ds;
  ds.config = config;
  ds.pairs.reserve(config.count);
  for (int i = 0; i < config.count; ++i) {
    // Independent stream per sample, so generation order (or parallel
    // workers) cannot change the draws.
    Rng rng(config.seed, RngStream::Data, static_cast<std::uint64_t>(i));
    TrajectoryPair tp =
        generate_pair(sample_params(rng), meshes, n_steps, coarse_stepper, fine_stepper);
    if (energy_drift(tp.fine, g, meshes.fine) > 1e-10 ||
        energy_drift(tp.coarse_on_fine, g, meshes.fine) > 1e-10)
      throw std::runtime_error("generate_dataset: energy drift exceeds 1e-10");
    ds.pairs.push_back(std::move(tp));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Binary serialization, little-endian throughout.
//
//   magic "SWE1" | version u32 | M_c u32 | M_f u32 | N u32 | count u32 |
//   tau f64 | f f64 | g f64 | seed u64 |
//   per sample: alpha f64 | beta f64 | pos f64 | k u32 |
//               x_c (N x 3M_f f64, row-major) | x_f (same)
//
// A "<path>.manifest" sidecar records the config as key=value lines.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
  os.write("SWE1", 4);
  detail::put_u32(os, kDatasetVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(ds.config.coarse_elems));
  detail::put_u32(os, static_cast<std::uint32_t>(ds.config.fine_elems));
  detail::put_u32(os, static_cast<std::uint32_t>(ds.config.num_levels));
  detail::put_u32(os, static_cast<std::uint32_t>(ds.pairs.size()));
  detail::put_f64(os, ds.config.physics.time_step);
  detail::put_f64(os, ds.config.physics.coriolis);
  detail::put_f64(os, ds.config.physics.gravity);
  detail::put_u64(os, ds.config.seed);
  for (const TrajectoryPair& tp : ds.pairs) {
    detail::put_f64(os, tp.params.alpha);
    detail::put_f64(os, tp.params.beta);
    detail::put_f64(os, tp.params.pos);
    detail::put_u32(os, static_cast<std::uint32_t>(tp.params.wavenumber));
    detail::put_matrix(os, tp.coarse_on_fine.levels);
    detail::put_matrix(os, tp.fine.levels);
  }
  if (!os) throw std::runtime_error("save_dataset: write failed for " + path);

  std::ofstream man(path + ".manifest");
  if (!man) throw std::runtime_error("save_dataset: cannot open " + path + ".manifest");
  man << "format_version=" << kDatasetVersion << "\n"
      << "coarse_elems=" << ds.config.coarse_elems << "\n"
      << "fine_elems=" << ds.config.fine_elems << "\n"
      << "num_levels=" << ds.config.num_levels << "\n"
      << "count=" << ds.pairs.size() << "\n"
      << "time_step=" << ds.config.physics.time_step << "\n"
      << "coriolis=" << ds.config.physics.coriolis << "\n"
      << "gravity=" << ds.config.physics.gravity << "\n"
      << "seed=" << ds.config.seed << "\n"
      << "train_count=" << ds.train_count() << "\n";
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SWE1", 4) != 0)
    throw std::runtime_error("load_dataset: bad magic in " + path);
  const std::uint32_t version = detail::get_u32(is);
  if (version != kDatasetVersion)
    throw std::runtime_error("load_dataset: unsupported version in " + path);

  Dataset ds;
  ds.config.coarse_elems = static_cast<int>(detail::get_u32(is));
  ds.config.fine_elems = static_cast<int>(detail::get_u32(is));
  ds.config.num_levels = static_cast<int>(detail::get_u32(is));
  ds.config.count = static_cast<int>(detail::get_u32(is));
  ds.config.physics.time_step = detail::get_f64(is);
  ds.config.physics.coriolis = detail::get_f64(is);
  ds.config.physics.gravity = detail::get_f64(is);
  ds.config.seed = detail::get_u64(is);

  const int N = ds.config.num_levels;
  const int D = 3 * ds.config.fine_elems;
  ds.pairs.resize(ds.config.count);
  for (TrajectoryPair& tp : ds.pairs) {
    tp.params.alpha = detail::get_f64(is);
    tp.params.beta = detail::get_f64(is);
    tp.params.pos = detail::get_f64(is);
    tp.params.wavenumber = static_cast<int>(detail::get_u32(is));
    tp.coarse_on_fine.levels.resize(N, D);
    detail::get_matrix(is, tp.coarse_on_fine.levels);
    tp.fine.levels.resize(N, D);
    detail::get_matrix(is, tp.fine.levels);
  }
  if (!is) throw std::runtime_error("load_dataset: truncated file " + path);
  return ds;
}

}  // namespace swe
