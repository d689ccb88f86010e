#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "swe/dynamics.hpp"
#include "swe/mesh.hpp"

namespace swe {

struct MeshPair {
  Mesh coarse;
  Mesh fine;
  int ratio = 0; // M_f / M_c
};

inline MeshPair make_mesh_pair(const Mesh& coarse, const Mesh& fine) {
  if (fine.num_elements % coarse.num_elements != 0)
    throw std::invalid_argument("make_mesh_pair: meshes are not nested");
  const int r = fine.num_elements / coarse.num_elements;
  if (r < 2)
    throw std::invalid_argument("make_mesh_pair: refinement ratio must be >= 2");
  return MeshPair{coarse, fine, r};
}

// Prolongations are explicit matrices so linearity and exactness are
// directly testable and gradients can pass through them if ever needed.

// Fine node j = coarse function evaluated at j*h_f: weights (1-s, s)
// between the enclosing coarse nodes.
inline Eigen::MatrixXd prolong_matrix_p1(const MeshPair& pair) {
  const int Mc = pair.coarse.num_elements;
  const int Mf = pair.fine.num_elements;
  const int r = pair.ratio;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Mf, Mc);
  for (int j = 0; j < Mf; ++j) {
    const int q = j / r, s = j % r;
    const double w = static_cast<double>(s) / r;
    out(j, q) += 1.0 - w;
    if (s != 0) out(j, (q + 1) % Mc) += w;
  }
  return out;
}

// Each coarse element value is copied to its r child elements.
inline Eigen::MatrixXd prolong_matrix_p0(const MeshPair& pair) {
  const int Mc = pair.coarse.num_elements;
  const int Mf = pair.fine.num_elements;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Mf, Mc);
  for (int j = 0; j < Mf; ++j) out(j, j / pair.ratio) = 1.0;
  return out;
}

inline FieldP1 prolong_p1(const FieldP1& coarse_field, const MeshPair& pair) {
  if (coarse_field.values.size() != pair.coarse.num_elements)
    throw std::invalid_argument("prolong_p1: field not on the coarse mesh");
  return FieldP1{prolong_matrix_p1(pair) * coarse_field.values};
}

inline FieldP0 prolong_p0(const FieldP0& coarse_field, const MeshPair& pair) {
  if (coarse_field.values.size() != pair.coarse.num_elements)
    throw std::invalid_argument("prolong_p0: field not on the coarse mesh");
  return FieldP0{prolong_matrix_p0(pair) * coarse_field.values};
}

inline State prolong_state(const State& coarse_state, const MeshPair& pair) {
  return State{prolong_p1(coarse_state.u, pair), prolong_p1(coarse_state.v, pair),
               prolong_p0(coarse_state.p, pair)};
}

inline Trajectory prolong_trajectory(const Trajectory& traj, const MeshPair& pair) {
  const int Mc = pair.coarse.num_elements;
  const int Mf = pair.fine.num_elements;
  if (traj.levels.cols() != 3 * Mc)
    throw std::invalid_argument("prolong_trajectory: trajectory not on the coarse mesh");
  const Eigen::MatrixXd p1 = prolong_matrix_p1(pair);
  const Eigen::MatrixXd p0 = prolong_matrix_p0(pair);
  Trajectory out;
  out.levels.resize(traj.levels.rows(), 3 * Mf);
  for (int n = 0; n < traj.num_levels(); ++n) {
    const Eigen::VectorXd x = traj.levels.row(n).transpose();
    out.levels.row(n).segment(0, Mf) = (p1 * x.segment(0, Mc)).transpose();
    out.levels.row(n).segment(Mf, Mf) = (p1 * x.segment(Mc, Mc)).transpose();
    out.levels.row(n).segment(2 * Mf, Mf) = (p0 * x.segment(2 * Mc, Mc)).transpose();
  }
  return out;
}

}  // namespace swe
