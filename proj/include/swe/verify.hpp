#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "swe/dataset.hpp"
#include "swe/dynamics.hpp"
#include "swe/nn.hpp"
#include "swe/trainer.hpp"
#include "swe/transfer.hpp"

namespace swe {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline bool skew_duality_holds(const Eigen::MatrixXd& grad, const Eigen::MatrixXd& div) {
  return (grad + div.transpose()).cwiseAbs().maxCoeff() == 0.0;
}

inline State random_wave_state(const Mesh& mesh, Rng& rng) {
  const SampleParams p = sample_params(rng);
  State s = zero_state(mesh);
  s.p = interpolate_p0([&p](double x) { return initial_pressure(p, x); }, mesh);
  return s;
}

inline State random_state(const Mesh& mesh, Rng& rng) {
  const int M = mesh.num_elements;
  State s = zero_state(mesh);
  for (int m = 0; m < M; ++m) {
    s.u.values[m] = rng.uniform(-1.0, 1.0);
    s.v.values[m] = rng.uniform(-1.0, 1.0);
    s.p.values[m] = rng.uniform(-1.0, 1.0);
  }
  return s;
}

// Worst relative energy drift over `n_ics` random wave initial conditions
// evolved `n_steps` Crank-Nicolson steps.
inline double max_conservation_drift(const Mesh& mesh, const PhysicsParams& params,
                                     int n_ics, int n_steps, std::uint64_t seed) {
  const Stepper stepper(mesh, params);
  double worst = 0.0;
  for (int i = 0; i < n_ics; ++i) {
    Rng rng(seed, RngStream::Data, static_cast<std::uint64_t>(i));
    const Trajectory traj = simulate(random_wave_state(mesh, rng), n_steps, stepper);
    worst = std::max(worst, energy_drift(traj, params.gravity, mesh));
  }
  return worst;
}

// L2 error between a coarse P1 function and its fine-mesh prolongation,
// by composite quadrature on a grid oversampled 10x relative to the fine
// mesh (midpoint rule; the integrand is piecewise quadratic and tiny, so
// this only needs to witness near-zero).
inline double prolongation_l2_error_p1(const FieldP1& coarse_field, const MeshPair& pair) {
  const FieldP1 fine_field = prolong_p1(coarse_field, pair);
  const int samples = 10 * pair.fine.num_elements;
  const double dx = kDomainLength / samples;
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = (i + 0.5) * dx;
    const double d = eval_p1(coarse_field, pair.coarse, x) -
                     eval_p1(fine_field, pair.fine, x);
    acc += d * d * dx;
  }
  return std::sqrt(acc);
}

inline double prolongation_l2_error_p0(const FieldP0& coarse_field, const MeshPair& pair) {
  const FieldP0 fine_field = prolong_p0(coarse_field, pair);
  const int samples = 10 * pair.fine.num_elements;
  const double dx = kDomainLength / samples;
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = (i + 0.5) * dx;
    const double d = eval_p0(coarse_field, pair.coarse, x) -
                     eval_p0(fine_field, pair.fine, x);
    acc += d * d * dx;
  }
  return std::sqrt(acc);
}

// Max per-tensor relative error between analytic gradients of total_loss
// and central finite differences.
inline double max_gradient_rel_err(Model& model, const Eigen::MatrixXd& A,
                                   const FeWorkspace& ws, const Eigen::MatrixXd& x_c,
                                   const Eigen::MatrixXd& x_f, double sigma,
                                   double fd_step = 1e-5) {
  const auto loss_now = [&]() {
    const Eigen::MatrixXd pred = nn_forward(model, A, x_c);
    return total_loss(pred, x_f, x_c, sigma, ws);
  };

  Model grads = model;
  zero_params(grads);
  ForwardCache cache;
  trainer_detail::sample_loss_grad(
      model, A, ws,
      TrajectoryPair{Trajectory{x_c}, Trajectory{x_f}, SampleParams{}}, sigma,
      &grads, cache);

  double worst = 0.0;
  for (std::size_t i = 0; i < model.nets.size(); ++i)
    for (std::size_t l = 0; l < model.nets[i].layers.size(); ++l) {
      auto per_tensor = [&](double* p, const double* g, Eigen::Index n) {
        double diff_sq = 0.0, fd_sq = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          const double saved = p[j];
          p[j] = saved + fd_step;
          const double up = loss_now();
          p[j] = saved - fd_step;
          const double down = loss_now();
          p[j] = saved;
          const double fd = (up - down) / (2.0 * fd_step);
          diff_sq += (fd - g[j]) * (fd - g[j]);
          fd_sq += fd * fd;
        }
        const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(fd_sq), 1e-12);
        worst = std::max(worst, rel);
      };
      auto& lp = model.nets[i].layers[l];
      const auto& lg = grads.nets[i].layers[l];
      per_tensor(lp.w.data(), lg.w.data(), lp.w.size());
      per_tensor(lp.b.data(), lg.b.data(), lp.b.size());
    }
  return worst;
}

// Builds the tiny differentiable configuration used for gradient checks.
struct TinySetup {
  Mesh mesh;
  Model model;
  Eigen::MatrixXd A;
  FeWorkspace ws;
  Eigen::MatrixXd x_c, x_f;
};

inline TinySetup make_tiny_setup(std::uint64_t seed, int fine_elems = 12,
                                 int num_levels = 3, int s1 = 2, int s2 = 4) {
  TinySetup t;
  t.mesh = build_mesh(fine_elems);
  PhysicsParams params;
  t.A = flow_map(t.mesh, params).A;
  t.ws = make_fe_workspace(t.mesh, params.gravity);
  const int D = 3 * fine_elems;

  // Central differences are only well-posed away from ReLU kinks: a
  // pre-activation within ~|step * dloss/dparam| of zero flips sign under
  // the probe and poisons the estimate. Deterministically retry derived
  // seeds until every pre-activation clears a safety margin.
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt * 0x9E3779B97F4A7C15ULL, RngStream::Init);
    t.model = make_model(num_levels, fine_elems, s1, s2);
    init_params(t.model, rng);
    t.x_c.resize(num_levels, D);
    t.x_f.resize(num_levels, D);
    for (int n = 0; n < num_levels; ++n)
      for (int d = 0; d < D; ++d) {
        t.x_c(n, d) = rng.uniform(-1.0, 1.0);
        t.x_f(n, d) = rng.uniform(-1.0, 1.0);
      }

    ForwardCache cache;
    (void)nn_forward(t.model, t.A, t.x_c, &cache);
    double closest = std::numeric_limits<double>::infinity();
    auto scan = [&closest](const UNetCache& uc) {
      for (const auto& pa : uc.pre_act)
        for (Eigen::Index i = 0; i < pa.size(); ++i)
          closest = std::min(closest, std::abs(pa.data()[i]));
    };
    for (const auto& uc : cache.stage1) scan(uc);
    for (const auto& uc : cache.lf.unets) scan(uc);
    if (closest > 2e-4 || attempt >= 500) return t;
  }
}

inline std::vector<CheckResult> run_verification(int coarse_elems = 75,
                                                 int fine_elems = 300,
                                                 std::uint64_t seed = 0) {
  std::vector<CheckResult> out;
  const PhysicsParams params;
  const Mesh coarse = build_mesh(coarse_elems);
  const Mesh fine = build_mesh(fine_elems);
  char buf[128];

  for (const Mesh& mesh : {coarse, fine}) {
    const double drift = max_conservation_drift(mesh, params, 5, 100, seed);
    std::snprintf(buf, sizeof(buf), "max relative drift %.3e (tol 1e-10)", drift);
    out.push_back({"energy conservation, M=" + std::to_string(mesh.num_elements),
                   drift <= 1e-10, buf});
  }

  {
    bool ok = true;
    for (int M : {3, coarse_elems, fine_elems}) {
      const Mesh mesh = build_mesh(M);
      const Eigen::MatrixXd div = divergence_matrix(mesh);
      const Eigen::MatrixXd grad = gradient_matrix(mesh);
      ok = ok && skew_duality_holds(grad, div);
      ok = ok && (div * Eigen::VectorXd::Ones(M)).cwiseAbs().maxCoeff() == 0.0;
      ok = ok && (grad * Eigen::VectorXd::Ones(M)).cwiseAbs().maxCoeff() == 0.0;
    }
    out.push_back({"skew duality (K = -G^T, constants annihilated)", ok,
                   ok ? "exact" : "violated"});
  }

  {
    const MeshPair pair = make_mesh_pair(coarse, fine);
    Rng rng(seed, RngStream::Data, 777);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      FieldP1 f1{Eigen::VectorXd(coarse_elems)};
      FieldP0 f0{Eigen::VectorXd(coarse_elems)};
      for (int m = 0; m < coarse_elems; ++m) {
        f1.values[m] = rng.uniform(-1.0, 1.0);
        f0.values[m] = rng.uniform(-1.0, 1.0);
      }
      worst = std::max(worst, prolongation_l2_error_p1(f1, pair));
      worst = std::max(worst, prolongation_l2_error_p0(f0, pair));
    }
    std::snprintf(buf, sizeof(buf), "max L2 error %.3e (tol 1e-13)", worst);
    out.push_back({"prolongation exactness", worst <= 1e-13, buf});
  }

  {
    const Stepper stepper(fine, params);
    const FlowMap fm = flow_map(fine, params);
    double worst_inf = 0.0, worst_energy = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng(seed, RngStream::Data, 1000 + i);
      const Eigen::VectorXd x = random_state(fine, rng).flat();
      const Eigen::VectorXd ax = fm.A * x;
      worst_inf = std::max(worst_inf, (ax - stepper.step(x)).cwiseAbs().maxCoeff() /
                                          x.cwiseAbs().maxCoeff());
      const double e0 = energy_of_flat(x, params.gravity, fine);
      const double e1 = energy_of_flat(ax, params.gravity, fine);
      worst_energy = std::max(worst_energy, std::abs(e1 - e0) / e0);
    }
    std::snprintf(buf, sizeof(buf), "step err %.3e (1e-12), energy err %.3e (1e-10)",
                  worst_inf, worst_energy);
    out.push_back(
        {"flow map fidelity", worst_inf <= 1e-12 && worst_energy <= 1e-10, buf});
  }

  {
    double worst = 0.0;
    for (double sigma : {0.0, 1.0}) {
      TinySetup tiny = make_tiny_setup(seed);
      worst = std::max(worst, max_gradient_rel_err(tiny.model, tiny.A, tiny.ws,
                                                   tiny.x_c, tiny.x_f, sigma));
    }
    std::snprintf(buf, sizeof(buf), "max per-tensor rel err %.3e (tol 1e-5)", worst);
    out.push_back({"gradient check vs finite differences", worst <= 1e-5, buf});
  }

  return out;
}

}  // namespace swe
