#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "swe/fe.hpp"
#include "swe/mesh.hpp"

namespace swe {

struct PhysicsParams {
  double coriolis = 0.1;   // f
  double gravity = 1.0;    // g, reference pressure constant
  double time_step = 0.01; // tau
};

// One time level: u,v in P1, p in P0 on a shared mesh. The flat layout is
// [u-nodes | v-nodes | p-elements], D = 3M.
struct State {
  FieldP1 u, v;
  FieldP0 p;

  Eigen::VectorXd flat() const {
    const auto M = u.values.size();
    Eigen::VectorXd x(3 * M);
    x.segment(0, M) = u.values;
    x.segment(M, M) = v.values;
    x.segment(2 * M, M) = p.values;
    return x;
  }

  static State from_flat(const Eigen::VectorXd& x, int num_elements) {
    const int M = num_elements;
    if (x.size() != 3 * M)
      throw std::invalid_argument("State::from_flat: dimension mismatch");
    return State{FieldP1{x.segment(0, M)}, FieldP1{x.segment(M, M)},
                 FieldP0{x.segment(2 * M, M)}};
  }
};

inline State zero_state(const Mesh& mesh) {
  const int M = mesh.num_elements;
  return State{FieldP1{Eigen::VectorXd::Zero(M)}, FieldP1{Eigen::VectorXd::Zero(M)},
               FieldP0{Eigen::VectorXd::Zero(M)}};
}

// N time levels as an N x D matrix, row n = flat state at level n.
struct Trajectory {
  Eigen::MatrixXd levels;

  int num_levels() const { return static_cast<int>(levels.rows()); }
  State state_at(int n, int num_elements) const {
    return State::from_flat(levels.row(n).transpose(), num_elements);
  }
};

inline double energy_of_flat(const Eigen::Ref<const Eigen::VectorXd>& x,
                             double g, const Mesh& mesh) {
  const int M = mesh.num_elements;
  return g * p1_norm_sq(x.segment(0, M), mesh) +
         g * p1_norm_sq(x.segment(M, M), mesh) +
         p0_norm_sq(x.segment(2 * M, M), mesh);
}

// Block matrices of the semidiscrete system Mhat xdot = Lhat x:
//   u-row:  M1 u_t = f M1 v - K p
//   v-row:  M1 v_t = -f M1 u
//   p-row:  M0 p_t = -g G u
struct Generator {
  Eigen::MatrixXd mass; // Mhat = blockdiag(M1, M1, M0)
  Eigen::MatrixXd gen;  // Lhat
};

inline Generator assemble_generator(const Mesh& mesh, const PhysicsParams& params) {
  const int M = mesh.num_elements;
  const int D = 3 * M;
  const Eigen::MatrixXd m1 = mass_matrix_p1(mesh);
  const Eigen::MatrixXd m0 = mass_matrix_p0(mesh);
  const Eigen::MatrixXd div = divergence_matrix(mesh);
  const Eigen::MatrixXd grad = gradient_matrix(mesh);

  Generator out;
  out.mass = Eigen::MatrixXd::Zero(D, D);
  out.mass.block(0, 0, M, M) = m1;
  out.mass.block(M, M, M, M) = m1;
  out.mass.block(2 * M, 2 * M, M, M) = m0;

  out.gen = Eigen::MatrixXd::Zero(D, D);
  out.gen.block(0, M, M, M) = params.coriolis * m1;
  out.gen.block(0, 2 * M, M, M) = -grad;
  out.gen.block(M, 0, M, M) = -params.coriolis * m1;
  out.gen.block(2 * M, 0, M, M) = -params.gravity * div;
  return out;
}

// Crank-Nicolson stepper: (Mhat - tau/2 Lhat) x1 = (Mhat + tau/2 Lhat) x0,
// factorized once per (mesh, params) and reused.
class Stepper {
public:
  Stepper(const Mesh& mesh, const PhysicsParams& params)
      : mesh_(mesh), params_(params) {
    const Generator gen = assemble_generator(mesh, params);
    const double half_tau = 0.5 * params.time_step;
    lhs_ = gen.mass - half_tau * gen.gen;
    rhs_ = gen.mass + half_tau * gen.gen;
    lu_.compute(lhs_);
    if ((lhs_ * lu_.solve(Eigen::VectorXd::Ones(lhs_.rows())) -
         Eigen::VectorXd::Ones(lhs_.rows()))
            .norm() > 1e-6)
      throw std::runtime_error("Stepper: singular system matrix");
  }

  Eigen::VectorXd step(const Eigen::VectorXd& x) const { return lu_.solve(rhs_ * x); }

  // Inverse map: swap LHS/RHS roles (the scheme is time-reversible).
  Eigen::VectorXd step_back(const Eigen::VectorXd& x) const {
    return Eigen::PartialPivLU<Eigen::MatrixXd>(rhs_).solve(lhs_ * x);
  }

  State step(const State& s) const {
    return State::from_flat(step(s.flat()), mesh_.num_elements);
  }

  const Mesh& mesh() const { return mesh_; }
  const PhysicsParams& params() const { return params_; }
  const Eigen::MatrixXd& rhs_matrix() const { return rhs_; }
  const Eigen::PartialPivLU<Eigen::MatrixXd>& factorization() const { return lu_; }

private:
  Mesh mesh_;
  PhysicsParams params_;
  Eigen::MatrixXd lhs_, rhs_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

// Dense one-step evolution matrix A = (Mhat - tau/2 Lhat)^{-1}(Mhat + tau/2 Lhat),
// solved column by column against the RHS columns.
struct FlowMap {
  Eigen::MatrixXd A;
  int num_elements = 0;
  PhysicsParams params;
};

inline FlowMap flow_map(const Mesh& mesh, const PhysicsParams& params) {
  Stepper stepper(mesh, params);
  FlowMap out;
  out.A = stepper.factorization().solve(stepper.rhs_matrix());
  out.num_elements = mesh.num_elements;
  out.params = params;
  return out;
}

inline Trajectory simulate(const State& initial, int n_steps, const Stepper& stepper) {
  if (n_steps < 0) throw std::invalid_argument("simulate: n_steps < 0");
  const int D = 3 * stepper.mesh().num_elements;
  Trajectory traj;
  traj.levels.resize(n_steps + 1, D);
  Eigen::VectorXd x = initial.flat();
  traj.levels.row(0) = x.transpose();
  for (int n = 0; n < n_steps; ++n) {
    x = stepper.step(x);
    traj.levels.row(n + 1) = x.transpose();
  }
  return traj;
}

inline Trajectory simulate(const State& initial, int n_steps, const Mesh& mesh,
                           const PhysicsParams& params) {
  return simulate(initial, n_steps, Stepper(mesh, params));
}

// max_n |E_n - E_0| / max(E_0, eps)
inline double energy_drift(const Trajectory& traj, double g, const Mesh& mesh) {
  if (traj.num_levels() < 1) return 0.0;
  const double e0 = energy_of_flat(traj.levels.row(0).transpose(), g, mesh);
  const double denom = std::max(e0, 1e-30);
  double worst = 0.0;
  for (int n = 1; n < traj.num_levels(); ++n) {
    const double en = energy_of_flat(traj.levels.row(n).transpose(), g, mesh);
    worst = std::max(worst, std::abs(en - e0) / denom);
  }
  return worst;
}

}  // namespace swe
