#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "swe/binio.hpp"
#include "swe/rng.hpp"

namespace swe {

// Activations and field tensors: rows = channels (time levels), cols = DOF.
using Tensor2 = Eigen::MatrixXd;

// Circular 1D convolution layer. Weights are stored as a
// out_channels x (in_channels * kernel_size) matrix with column index
// c * kernel_size + j, so forward/backward reduce to GEMMs against the
// im2col expansion of the input.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 0; // odd, so circular padding preserves the length
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

inline ConvLayer make_conv_layer(int in_channels, int out_channels, int kernel_size) {
  if (kernel_size % 2 == 0)
    throw std::invalid_argument("make_conv_layer: kernel size must be odd");
  ConvLayer l{in_channels, out_channels, kernel_size,
              Eigen::MatrixXd::Zero(out_channels, in_channels * kernel_size),
              Eigen::VectorXd::Zero(out_channels)};
  return l;
}

namespace nn_detail {

// im2col with circular indexing: row c*k+j holds x(c, .) shifted by
// j - (k-1)/2 positions. Each row is two contiguous copies.
inline void im2col_circular(const Tensor2& x, int k, Eigen::MatrixXd& out) {
  const int C = static_cast<int>(x.rows());
  const int L = static_cast<int>(x.cols());
  const int off = (k - 1) / 2;
  out.resize(C * k, L);
  for (int c = 0; c < C; ++c) {
    for (int j = 0; j < k; ++j) {
      const int s = (((j - off) % L) + L) % L;
      const int r = c * k + j;
      out.row(r).segment(0, L - s) = x.row(c).segment(s, L - s);
      if (s != 0) out.row(r).segment(L - s, s) = x.row(c).segment(0, s);
    }
  }
}

// Adjoint of im2col_circular: scatter-add the expanded gradient back
// onto the input layout.
inline void col2im_circular_add(const Eigen::MatrixXd& dxt, int k, Tensor2& dx) {
  const int C = static_cast<int>(dx.rows());
  const int L = static_cast<int>(dx.cols());
  const int off = (k - 1) / 2;
  for (int c = 0; c < C; ++c) {
    for (int j = 0; j < k; ++j) {
      const int s = (((j - off) % L) + L) % L;
      const int r = c * k + j;
      dx.row(c).segment(s, L - s) += dxt.row(r).segment(0, L - s);
      if (s != 0) dx.row(c).segment(0, s) += dxt.row(r).segment(L - s, s);
    }
  }
}

}  // namespace nn_detail

// y[o][i] = b[o] + sum_{c,j} w[o][c][j] x[c][(i + j - (k-1)/2) mod L]
inline Tensor2 conv1d_circular(const Tensor2& x, const ConvLayer& layer) {
  if (x.rows() != layer.in_channels)
    throw std::invalid_argument("conv1d_circular: channel mismatch");
  Eigen::MatrixXd xt;
  nn_detail::im2col_circular(x, layer.kernel_size, xt);
  Tensor2 y = layer.w * xt;
  y.colwise() += layer.b;
  return y;
}

// Accumulates weight/bias gradients; writes the input gradient if dx != nullptr.
inline void conv1d_circular_backward(const ConvLayer& layer, const Tensor2& x,
                                     const Tensor2& dy, ConvLayer& grads,
                                     Tensor2* dx) {
  grads.b += dy.rowwise().sum();
  Eigen::MatrixXd xt;
  nn_detail::im2col_circular(x, layer.kernel_size, xt);
  grads.w.noalias() += dy * xt.transpose();
  if (dx != nullptr) {
    dx->setZero(layer.in_channels, x.cols());
    const Eigen::MatrixXd dxt = layer.w.transpose() * dy;
    nn_detail::col2im_circular_add(dxt, layer.kernel_size, *dx);
  }
}

// Per-field UNet: channel path N -> s1 -> s2 -> s2 -> s1 -> N with kernel
// sizes (3,5,7,5,3), ReLU after layers 1-4, residual skip around the stack.
struct UNet {
  std::array<ConvLayer, 5> layers;
};

inline UNet make_unet(int num_levels, int s1, int s2) {
  UNet u;
  u.layers[0] = make_conv_layer(num_levels, s1, 3);
  u.layers[1] = make_conv_layer(s1, s2, 5);
  u.layers[2] = make_conv_layer(s2, s2, 7);
  u.layers[3] = make_conv_layer(s2, s1, 5);
  u.layers[4] = make_conv_layer(s1, num_levels, 3);
  return u;
}

struct UNetCache {
  std::array<Tensor2, 5> inputs;  // input to each conv
  std::array<Tensor2, 4> pre_act; // pre-ReLU outputs of layers 1-4
};

inline Tensor2 unet_forward(const UNet& net, const Tensor2& x, UNetCache* cache = nullptr) {
  Tensor2 a = x;
  for (int l = 0; l < 5; ++l) {
    if (cache) cache->inputs[l] = a;
    Tensor2 z = conv1d_circular(a, net.layers[l]);
    if (l < 4) {
      if (cache) cache->pre_act[l] = z;
      a = z.cwiseMax(0.0);
    } else {
      a = std::move(z);
    }
  }
  return a + x;
}

// dy is the gradient at the UNet output; parameter gradients accumulate
// into `grads`; the input gradient (conv chain + skip) lands in *dx when
// requested. ReLU uses subgradient 0 at exactly 0.
inline void unet_backward(const UNet& net, const UNetCache& cache, const Tensor2& dy,
                          UNet& grads, Tensor2* dx = nullptr) {
  Tensor2 d = dy;
  Tensor2 d_in;
  for (int l = 4; l >= 0; --l) {
    const bool need_dx = (l > 0) || (dx != nullptr);
    conv1d_circular_backward(net.layers[l], cache.inputs[l], d, grads.layers[l],
                             need_dx ? &d_in : nullptr);
    if (l > 0)
      d = d_in.array() * (cache.pre_act[l - 1].array() > 0.0).cast<double>();
  }
  if (dx != nullptr) *dx = d_in + dy;
}

// The full neural interpolant NN(x_c) = UNet(x_c) + LearnFlow(UNet(x_c)).
// nets 0-2: stage-one UNets (u, v, p); nets 3-5: stage-two UNets inside
// LearnFlow. The flow map A is frozen: gradients pass through it but it
// is never updated.
struct Model {
  int num_levels = 0; // N (channel count)
  int field_len = 0;  // L = M_f (DOF per field)
  int s1 = 0;
  int s2 = 0;
  std::array<UNet, 6> nets;

  int dim() const { return 3 * field_len; }
};

inline Model make_model(int num_levels, int field_len, int s1, int s2) {
  Model m;
  m.num_levels = num_levels;
  m.field_len = field_len;
  m.s1 = s1;
  m.s2 = s2;
  for (auto& net : m.nets) net = make_unet(num_levels, s1, s2);
  return m;
}

template <class F>
void visit_params(Model& m, F&& f) {
  for (auto& net : m.nets)
    for (auto& layer : net.layers) {
      f(layer.w.data(), layer.w.size());
      f(layer.b.data(), layer.b.size());
    }
}

template <class F>
void visit_params(const Model& m, F&& f) {
  for (const auto& net : m.nets)
    for (const auto& layer : net.layers) {
      f(layer.w.data(), layer.w.size());
      f(layer.b.data(), layer.b.size());
    }
}

inline long param_count(const Model& m) {
  long n = 0;
  visit_params(m, [&n](const double*, Eigen::Index sz) { n += sz; });
  return n;
}

inline void zero_params(Model& m) {
  visit_params(m, [](double* p, Eigen::Index sz) {
    std::memset(p, 0, static_cast<std::size_t>(sz) * sizeof(double));
  });
}

// Fan-in scaled uniform init, zero biases: keeps the residual branch
// small so the model starts near the identity map.
inline void init_params(Model& m, Rng& rng) {
  for (auto& net : m.nets)
    for (auto& layer : net.layers) {
      const double bound =
          std::sqrt(1.0 / (layer.in_channels * layer.kernel_size));
      for (Eigen::Index i = 0; i < layer.w.size(); ++i)
        layer.w.data()[i] = rng.uniform(-bound, bound);
      layer.b.setZero();
    }
}

namespace nn_detail {

inline Tensor2 extract_field(const Eigen::MatrixXd& x, int field, int field_len) {
  return x.block(0, field * field_len, x.rows(), field_len);
}

}  // namespace nn_detail

struct LearnFlowCache {
  Eigen::MatrixXd rows; // after the flow recurrence
  std::array<UNetCache, 3> unets;
};

// Rows i+1 are overwritten by A * row i (so row n = A^n * row 0), then
// the stage-two UNets act per field.
inline Eigen::MatrixXd learnflow_forward(const Model& m, const Eigen::MatrixXd& A,
                                         const Eigen::MatrixXd& x,
                                         LearnFlowCache* cache = nullptr) {
  const int N = static_cast<int>(x.rows());
  const int L = m.field_len;
  if (x.cols() != A.rows() || A.rows() != 3 * L)
    throw std::invalid_argument("learnflow_forward: dimension mismatch");
  Eigen::MatrixXd r = x;
  for (int i = 0; i + 1 < N; ++i)
    r.row(i + 1) = (A * r.row(i).transpose()).transpose();
  if (cache) cache->rows = r;

  Eigen::MatrixXd y(N, 3 * L);
  for (int field = 0; field < 3; ++field) {
    const Tensor2 t = nn_detail::extract_field(r, field, L);
    y.block(0, field * L, N, L) =
        unet_forward(m.nets[3 + field], t, cache ? &cache->unets[field] : nullptr);
  }
  return y;
}

// Returns the gradient w.r.t. the LearnFlow input. Only row 0 is nonzero:
// rows 1..N-1 of the input are overwritten by the recurrence, so their
// incoming gradients are pulled back through powers of A^T onto row 0.
inline Eigen::MatrixXd learnflow_backward(const Model& m, const Eigen::MatrixXd& A,
                                          const LearnFlowCache& cache,
                                          const Eigen::MatrixXd& dy, Model& grads) {
  const int N = static_cast<int>(dy.rows());
  const int L = m.field_len;
  Eigen::MatrixXd dr(N, 3 * L);
  for (int field = 0; field < 3; ++field) {
    Tensor2 dt;
    unet_backward(m.nets[3 + field], cache.unets[field],
                  nn_detail::extract_field(dy, field, L), grads.nets[3 + field], &dt);
    dr.block(0, field * L, N, L) = dt;
  }
  Eigen::VectorXd h = dr.row(N - 1).transpose();
  for (int i = N - 2; i >= 0; --i)
    h = A.transpose() * h + dr.row(i).transpose();
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(N, 3 * L);
  dx.row(0) = h.transpose();
  return dx;
}

struct ForwardCache {
  std::array<UNetCache, 3> stage1;
  Eigen::MatrixXd stage1_out; // shared evaluation of UNet(x_c)
  LearnFlowCache lf;
};

inline Eigen::MatrixXd nn_forward(const Model& m, const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& x_c,
                                  ForwardCache* cache = nullptr) {
  const int N = static_cast<int>(x_c.rows());
  const int L = m.field_len;
  if (x_c.cols() != 3 * L || N != m.num_levels)
    throw std::invalid_argument("nn_forward: input shape mismatch");
  Eigen::MatrixXd t(N, 3 * L);
  for (int field = 0; field < 3; ++field) {
    const Tensor2 xf = nn_detail::extract_field(x_c, field, L);
    t.block(0, field * L, N, L) =
        unet_forward(m.nets[field], xf, cache ? &cache->stage1[field] : nullptr);
  }
  if (cache) cache->stage1_out = t;
  return t + learnflow_forward(m, A, t, cache ? &cache->lf : nullptr);
}

inline void nn_backward(const Model& m, const Eigen::MatrixXd& A,
                        const ForwardCache& cache, const Eigen::MatrixXd& dy,
                        Model& grads) {
  const Eigen::MatrixXd dt = dy + learnflow_backward(m, A, cache.lf, dy, grads);
  const int L = m.field_len;
  for (int field = 0; field < 3; ++field)
    unet_backward(m.nets[field], cache.stage1[field],
                  nn_detail::extract_field(dt, field, L), grads.nets[field], nullptr);
}

// ---------------------------------------------------------------------------
// Model file, little-endian:
//   magic "SWEM" | version u32 | N u32 | L u32 | D u32 | s1 u32 | s2 u32 |
//   six UNets in declaration order, per layer weights (out, in, tap order)
//   then biases, all f64.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open " + path);
  os.write("SWEM", 4);
  detail::put_u32(os, kModelVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(m.num_levels));
  detail::put_u32(os, static_cast<std::uint32_t>(m.field_len));
  detail::put_u32(os, static_cast<std::uint32_t>(m.dim()));
  detail::put_u32(os, static_cast<std::uint32_t>(m.s1));
  detail::put_u32(os, static_cast<std::uint32_t>(m.s2));
  for (const auto& net : m.nets)
    for (const auto& layer : net.layers) {
      detail::put_matrix(os, layer.w);
      for (Eigen::Index i = 0; i < layer.b.size(); ++i)
        detail::put_f64(os, layer.b[i]);
    }
  if (!os) throw std::runtime_error("save_model: write failed for " + path);
}

inline Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SWEM", 4) != 0)
    throw std::runtime_error("load_model: bad magic in " + path);
  if (detail::get_u32(is) != kModelVersion)
    throw std::runtime_error("load_model: unsupported version in " + path);
  const int N = static_cast<int>(detail::get_u32(is));
  const int L = static_cast<int>(detail::get_u32(is));
  const int D = static_cast<int>(detail::get_u32(is));
  const int s1 = static_cast<int>(detail::get_u32(is));
  const int s2 = static_cast<int>(detail::get_u32(is));
  if (D != 3 * L) throw std::runtime_error("load_model: inconsistent header in " + path);
  Model m = make_model(N, L, s1, s2);
  for (auto& net : m.nets)
    for (auto& layer : net.layers) {
      detail::get_matrix(is, layer.w);
      for (Eigen::Index i = 0; i < layer.b.size(); ++i)
        layer.b[i] = detail::get_f64(is);
    }
  if (!is) throw std::runtime_error("load_model: truncated file " + path);
  return m;
}

}  // namespace swe
