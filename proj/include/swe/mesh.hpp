#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

namespace swe {

inline constexpr double kDomainLength = 3.0;

// Uniform partition of the periodic interval [0,3). Node m sits at m*h;
// element m spans nodes (m, m+1 mod M).
struct Mesh {
  int num_elements = 0;
  double element_size = 0.0;

  double node(int m) const { return m * element_size; }
  double midpoint(int m) const { return (m + 0.5) * element_size; }
};

inline Mesh build_mesh(int num_elements) {
  if (num_elements < 2)
    throw std::invalid_argument("build_mesh: need at least 2 elements");
  return Mesh{num_elements, kDomainLength / num_elements};
}

// Continuous piecewise-linear function; one DOF per node (periodicity
// identifies node M with node 0).
struct FieldP1 {
  Eigen::VectorXd values;
};

// Discontinuous piecewise-constant function; one DOF per element,
// located at the element midpoint.
struct FieldP0 {
  Eigen::VectorXd values;
};

inline FieldP1 interpolate_p1(const std::function<double(double)>& f, const Mesh& mesh) {
  FieldP1 out{Eigen::VectorXd(mesh.num_elements)};
  for (int m = 0; m < mesh.num_elements; ++m) out.values[m] = f(mesh.node(m));
  return out;
}

inline FieldP0 interpolate_p0(const std::function<double(double)>& f, const Mesh& mesh) {
  FieldP0 out{Eigen::VectorXd(mesh.num_elements)};
  for (int m = 0; m < mesh.num_elements; ++m) out.values[m] = f(mesh.midpoint(m));
  return out;
}

// Pointwise evaluation of the P1 interpolant at arbitrary x in [0,3).
inline double eval_p1(const FieldP1& field, const Mesh& mesh, double x) {
  const int M = mesh.num_elements;
  double t = x / mesh.element_size;
  int m = static_cast<int>(std::floor(t));
  double s = t - m;
  m = ((m % M) + M) % M;
  return (1.0 - s) * field.values[m] + s * field.values[(m + 1) % M];
}

inline double eval_p0(const FieldP0& field, const Mesh& mesh, double x) {
  const int M = mesh.num_elements;
  int m = static_cast<int>(std::floor(x / mesh.element_size));
  m = ((m % M) + M) % M;
  return field.values[m];
}

}  // namespace swe
