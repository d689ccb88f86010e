#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "swe/mesh.hpp"

namespace swe {

// P1 mass matrix: circulant tridiagonal, diag 2h/3 and off-diag h/6,
// assembled element by element so M=2 (doubled couplings) comes out right.
inline Eigen::MatrixXd mass_matrix_p1(const Mesh& mesh) {
  const int M = mesh.num_elements;
  const double h = mesh.element_size;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M, M);
  for (int m = 0; m < M; ++m) {
    const int a = m, b = (m + 1) % M;
    out(a, a) += h / 3.0;
    out(b, b) += h / 3.0;
    out(a, b) += h / 6.0;
    out(b, a) += h / 6.0;
  }
  return out;
}

// P0 mass matrix: h * I.
inline Eigen::MatrixXd mass_matrix_p0(const Mesh& mesh) {
  return mesh.element_size *
         Eigen::MatrixXd::Identity(mesh.num_elements, mesh.num_elements);
}

// G acting on P1 nodal vectors: (G u)_m = integral of U_x over element m
// = u_{m+1} - u_m (integer entries, exact).
inline Eigen::MatrixXd divergence_matrix(const Mesh& mesh) {
  const int M = mesh.num_elements;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M, M);
  for (int m = 0; m < M; ++m) {
    out(m, m) += -1.0;
    out(m, (m + 1) % M) += 1.0;
  }
  return out;
}

// K acting on P0 vectors: (K p)_j = -<p, phi_{j,x}> = p_j - p_{j-1},
// so K = -G^T exactly.
inline Eigen::MatrixXd gradient_matrix(const Mesh& mesh) {
  const int M = mesh.num_elements;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M, M);
  for (int j = 0; j < M; ++j) {
    out(j, j) += 1.0;
    out(j, (j - 1 + M) % M) += -1.0;
  }
  return out;
}

// u^T M1 u, evaluated element-wise without forming M1. For the element
// with endpoint values (a,b): integral of U^2 = h/3 (a^2 + a b + b^2).
inline double p1_norm_sq(const Eigen::VectorXd& u, const Mesh& mesh) {
  const int M = mesh.num_elements;
  const double h = mesh.element_size;
  double acc = 0.0;
  for (int m = 0; m < M; ++m) {
    const double a = u[m], b = u[(m + 1) % M];
    acc += (a * a + a * b + b * b);
  }
  return acc * h / 3.0;
}

inline double p0_norm_sq(const Eigen::VectorXd& p, const Mesh& mesh) {
  return mesh.element_size * p.squaredNorm();
}

// Discrete energy g<U,U> + g<V,V> + <P,P>.
inline double energy(const FieldP1& u, const FieldP1& v, const FieldP0& p,
                     double g, const Mesh& mesh) {
  const int M = mesh.num_elements;
  if (u.values.size() != M || v.values.size() != M || p.values.size() != M)
    throw std::invalid_argument("energy: field/mesh dimension mismatch");
  return g * p1_norm_sq(u.values, mesh) + g * p1_norm_sq(v.values, mesh) +
         p0_norm_sq(p.values, mesh);
}

}  // namespace swe
