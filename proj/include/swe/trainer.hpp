#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "swe/dataset.hpp"
#include "swe/nn.hpp"

namespace swe {

// Cached fine-mesh operators used by every loss evaluation.
struct FeWorkspace {
  Mesh mesh;
  Eigen::MatrixXd m1;
  double h = 0.0;
  double g = 1.0;
};

inline FeWorkspace make_fe_workspace(const Mesh& mesh, double g) {
  return FeWorkspace{mesh, mass_matrix_p1(mesh), mesh.element_size, g};
}

namespace trainer_detail {

// Per-level FE squared error and, optionally, its gradient 2 M e.
inline double level_l2_sq(const FeWorkspace& ws,
                          const Eigen::Ref<const Eigen::VectorXd>& err,
                          Eigen::VectorXd* grad) {
  const int M = ws.mesh.num_elements;
  const Eigen::VectorXd m1eu = ws.m1 * err.segment(0, M);
  const Eigen::VectorXd m1ev = ws.m1 * err.segment(M, M);
  const double val = err.segment(0, M).dot(m1eu) + err.segment(M, M).dot(m1ev) +
                     ws.h * err.segment(2 * M, M).squaredNorm();
  if (grad) {
    grad->resize(3 * M);
    grad->segment(0, M) = 2.0 * m1eu;
    grad->segment(M, M) = 2.0 * m1ev;
    grad->segment(2 * M, M) = 2.0 * ws.h * err.segment(2 * M, M);
  }
  return val;
}

// Discrete energy of one flat level and, optionally, its gradient
// (2g M1 u | 2g M1 v | 2h p).
inline double level_energy(const FeWorkspace& ws,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           Eigen::VectorXd* grad) {
  const int M = ws.mesh.num_elements;
  const Eigen::VectorXd m1u = ws.m1 * x.segment(0, M);
  const Eigen::VectorXd m1v = ws.m1 * x.segment(M, M);
  const double val = ws.g * x.segment(0, M).dot(m1u) + ws.g * x.segment(M, M).dot(m1v) +
                     ws.h * x.segment(2 * M, M).squaredNorm();
  if (grad) {
    grad->resize(3 * M);
    grad->segment(0, M) = 2.0 * ws.g * m1u;
    grad->segment(M, M) = 2.0 * ws.g * m1v;
    grad->segment(2 * M, M) = 2.0 * ws.h * x.segment(2 * M, M);
  }
  return val;
}

}  // namespace trainer_detail

// Squared L2 error in the finite element space, summed over time levels
// and fields. This is the mass-matrix-weighted norm, not the raw MSE.
inline double fe_l2_sq_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                            const FeWorkspace& ws, Eigen::MatrixXd* grad = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("fe_l2_sq_loss: shape mismatch");
  double acc = 0.0;
  if (grad) grad->setZero(pred.rows(), pred.cols());
  Eigen::VectorXd g;
  for (int n = 0; n < pred.rows(); ++n) {
    const Eigen::VectorXd err = (pred.row(n) - target.row(n)).transpose();
    acc += trainer_detail::level_l2_sq(ws, err, grad ? &g : nullptr);
    if (grad) grad->row(n) = g.transpose();
  }
  return acc;
}

// (1/N) sum_n |E(pred level n) - E(x_c level 0)|.
inline double energy_penalty(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& x_c,
                             const FeWorkspace& ws, Eigen::MatrixXd* grad = nullptr) {
  if (pred.rows() != x_c.rows() || pred.cols() != x_c.cols())
    throw std::invalid_argument("energy_penalty: shape mismatch");
  const int N = static_cast<int>(pred.rows());
  const double e_ref =
      trainer_detail::level_energy(ws, x_c.row(0).transpose(), nullptr);
  double acc = 0.0;
  if (grad) grad->setZero(pred.rows(), pred.cols());
  Eigen::VectorXd g;
  for (int n = 0; n < N; ++n) {
    const double en =
        trainer_detail::level_energy(ws, pred.row(n).transpose(), grad ? &g : nullptr);
    const double dev = en - e_ref;
    acc += std::abs(dev);
    if (grad) {
      const double s = (dev > 0.0) ? 1.0 : (dev < 0.0 ? -1.0 : 0.0);
      grad->row(n) = (s / N) * g.transpose();
    }
  }
  return acc / N;
}

// Single-sample total loss; batches take the mean of this over samples.
inline double total_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                         const Eigen::MatrixXd& x_c, double sigma,
                         const FeWorkspace& ws, Eigen::MatrixXd* grad = nullptr) {
  Eigen::MatrixXd g_pen;
  const double data = fe_l2_sq_loss(pred, target, ws, grad);
  const double pen = energy_penalty(pred, x_c, ws, grad ? &g_pen : nullptr);
  if (grad) *grad += sigma * g_pen;
  return data + sigma * pen;
}

// -------------------------------------------------------------------------
// Adam
// -------------------------------------------------------------------------

struct AdamState {
  Model m1; // first moments
  Model m2; // second moments
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(const Model& params) {
  AdamState s;
  s.m1 = params;
  s.m2 = params;
  zero_params(s.m1);
  zero_params(s.m2);
  return s;
}

template <class F>
void for_each_param_quad(Model& p, const Model& g, Model& m1, Model& m2, F&& f) {
  for (std::size_t i = 0; i < p.nets.size(); ++i)
    for (std::size_t l = 0; l < p.nets[i].layers.size(); ++l) {
      auto& lp = p.nets[i].layers[l];
      const auto& lg = g.nets[i].layers[l];
      auto& l1 = m1.nets[i].layers[l];
      auto& l2 = m2.nets[i].layers[l];
      f(lp.w.data(), lg.w.data(), l1.w.data(), l2.w.data(), lp.w.size());
      f(lp.b.data(), lg.b.data(), l1.b.data(), l2.b.data(), lp.b.size());
    }
}

inline void adam_step(Model& params, const Model& grads, AdamState& state, double lr) {
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
  for_each_param_quad(
      params, grads, state.m1, state.m2,
      [&](double* p, const double* g, double* m, double* v, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
          m[i] = b1 * m[i] + (1.0 - b1) * g[i];
          v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
          p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
      });
}

// -------------------------------------------------------------------------
// Training loop
// -------------------------------------------------------------------------

struct TrainConfig {
  double sigma = 0.0;
  int batch_size = 16;
  int epochs = 300;
  double base_lr = 1e-3;
  int decay_period = 30;   // epochs per learning-rate decade
  double decay_factor = 10.0;
  std::uint64_t seed = 0;
  int s1 = 80;  // 2^3 * N at N=10
  int s2 = 640; // 2^6 * N at N=10
  int threads = 1;
};

inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  return cfg.base_lr *
         std::pow(cfg.decay_factor, -static_cast<double>(epoch / cfg.decay_period));
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double data_term = 0.0;
  double penalty_term = 0.0;
};

struct EvalRecord {
  int batch = 0;
  int time_level = 0;
  double l2sq_error = 0.0;
  double energy_dev_mean = 0.0;
  double energy_dev_std = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<EvalRecord> eval;
  double final_loss = 0.0;
};

namespace trainer_detail {

inline void accumulate_params(Model& dst, const Model& src) {
  for (std::size_t i = 0; i < dst.nets.size(); ++i)
    for (std::size_t l = 0; l < dst.nets[i].layers.size(); ++l) {
      dst.nets[i].layers[l].w += src.nets[i].layers[l].w;
      dst.nets[i].layers[l].b += src.nets[i].layers[l].b;
    }
}

inline void scale_params(Model& m, double s) {
  visit_params(m, [s](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] *= s;
  });
}

struct SampleLoss {
  double data = 0.0;
  double penalty = 0.0;
};

inline SampleLoss sample_loss_grad(const Model& model, const Eigen::MatrixXd& A,
                                   const FeWorkspace& ws, const TrajectoryPair& tp,
                                   double sigma, Model* grads, ForwardCache& cache) {
  const Eigen::MatrixXd pred = nn_forward(model, A, tp.coarse_on_fine.levels, &cache);
  Eigen::MatrixXd dy;
  SampleLoss out;
  out.data = fe_l2_sq_loss(pred, tp.fine.levels, ws, grads ? &dy : nullptr);
  Eigen::MatrixXd dy_pen;
  out.penalty =
      energy_penalty(pred, tp.coarse_on_fine.levels, ws, grads ? &dy_pen : nullptr);
  if (grads) {
    dy += sigma * dy_pen;
    nn_backward(model, A, cache, dy, *grads);
  }
  return out;
}

}  // namespace trainer_detail

// Deterministic training loop. Batch gradients are accumulated into
// per-worker buffers (samples assigned in contiguous index blocks) and
// reduced in worker order, so a fixed thread count gives bitwise
// reproducible results; threads=1 is the reference ordering.
inline Model train(const Dataset& ds, const TrainConfig& cfg, TrainReport* report) {
  const int train_n = ds.train_count();
  if (train_n < 1)
    throw std::invalid_argument("train: dataset has no training samples");

  const Mesh fine = build_mesh(ds.config.fine_elems);
  const FeWorkspace ws = make_fe_workspace(fine, ds.config.physics.gravity);
  const FlowMap fm = flow_map(fine, ds.config.physics);

  Model model = make_model(ds.config.num_levels, fine.num_elements, cfg.s1, cfg.s2);
  Rng init_rng(cfg.seed, RngStream::Init);
  init_params(model, init_rng);

  AdamState adam = make_adam_state(model);
  const int threads = std::max(1, cfg.threads);

  Model batch_grads = model;
  std::vector<Model> worker_grads(threads, model);
  std::vector<ForwardCache> worker_cache(threads);

  std::vector<int> indices(train_n);
  std::iota(indices.begin(), indices.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    Rng shuffle_rng(cfg.seed, RngStream::Shuffle, static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(indices);

    double epoch_data = 0.0, epoch_pen = 0.0;
    for (int start = 0; start < train_n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, train_n - start);
      std::vector<trainer_detail::SampleLoss> losses(bsz);

      auto run_chunk = [&](int worker, int lo, int hi) {
        zero_params(worker_grads[worker]);
        for (int s = lo; s < hi; ++s)
          losses[s] = trainer_detail::sample_loss_grad(
              model, fm.A, ws, ds.pairs[indices[start + s]], cfg.sigma,
              &worker_grads[worker], worker_cache[worker]);
      };

      const int nw = std::min(threads, bsz);
      if (nw == 1) {
        run_chunk(0, 0, bsz);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) {
          const int lo = w * bsz / nw, hi = (w + 1) * bsz / nw;
          pool.emplace_back(run_chunk, w, lo, hi);
        }
        for (auto& t : pool) t.join();
      }

      zero_params(batch_grads);
      for (int w = 0; w < nw; ++w)
        trainer_detail::accumulate_params(batch_grads, worker_grads[w]);
      trainer_detail::scale_params(batch_grads, 1.0 / bsz);
      adam_step(model, batch_grads, adam, lr);

      for (const auto& l : losses) {
        epoch_data += l.data;
        epoch_pen += l.penalty;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.data_term = epoch_data / train_n;
    rec.penalty_term = epoch_pen / train_n;
    rec.mean_loss = rec.data_term + cfg.sigma * rec.penalty_term;
    if (report) report->epochs.push_back(rec);
    if (report) report->final_loss = rec.mean_loss;
  }
  return model;
}

// Validation protocol: `num_batches` seeded random batches from the
// validation split; per time level, the batch-mean squared L2 error and
// the mean/std of the energy deviation E_n(pred) - E_0(x_c).
inline std::vector<EvalRecord> evaluate(const Model& model, const Dataset& ds,
                                        std::uint64_t seed, int num_batches = 3,
                                        int batch_size = 16) {
  const int val_begin = ds.train_count();
  const int val_n = static_cast<int>(ds.pairs.size()) - val_begin;
  if (val_n < batch_size)
    throw std::invalid_argument("evaluate: validation split smaller than one batch");

  const Mesh fine = build_mesh(ds.config.fine_elems);
  const FeWorkspace ws = make_fe_workspace(fine, ds.config.physics.gravity);
  const FlowMap fm = flow_map(fine, ds.config.physics);
  const int N = ds.config.num_levels;

  std::vector<EvalRecord> out;
  for (int b = 0; b < num_batches; ++b) {
    std::vector<int> val_indices(val_n);
    std::iota(val_indices.begin(), val_indices.end(), val_begin);
    Rng rng(seed, RngStream::EvalBatch, static_cast<std::uint64_t>(b));
    rng.shuffle(val_indices);

    Eigen::MatrixXd l2sq = Eigen::MatrixXd::Zero(N, batch_size);
    Eigen::MatrixXd dev = Eigen::MatrixXd::Zero(N, batch_size);
    for (int s = 0; s < batch_size; ++s) {
      const TrajectoryPair& tp = ds.pairs[val_indices[s]];
      const Eigen::MatrixXd pred = nn_forward(model, fm.A, tp.coarse_on_fine.levels);
      const double e_ref = trainer_detail::level_energy(
          ws, tp.coarse_on_fine.levels.row(0).transpose(), nullptr);
      for (int n = 0; n < N; ++n) {
        const Eigen::VectorXd err = (pred.row(n) - tp.fine.levels.row(n)).transpose();
        l2sq(n, s) = trainer_detail::level_l2_sq(ws, err, nullptr);
        dev(n, s) =
            trainer_detail::level_energy(ws, pred.row(n).transpose(), nullptr) - e_ref;
      }
    }
    for (int n = 0; n < N; ++n) {
      EvalRecord rec;
      rec.batch = b;
      rec.time_level = n;
      rec.l2sq_error = l2sq.row(n).mean();
      rec.energy_dev_mean = dev.row(n).mean();
      const double var =
          (dev.row(n).array() - rec.energy_dev_mean).square().sum() / batch_size;
      rec.energy_dev_std = std::sqrt(var);
      out.push_back(rec);
    }
  }
  return out;
}

// -------------------------------------------------------------------------
// CSV reports (full f64 precision so identical runs give identical bytes)
// -------------------------------------------------------------------------

namespace trainer_detail {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace trainer_detail

inline void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& recs) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_loss_csv: cannot open " + path);
  os << "epoch,lr,mean_loss,data_term,penalty_term\n";
  for (const auto& r : recs)
    os << r.epoch << ',' << trainer_detail::fmt_g17(r.lr) << ','
       << trainer_detail::fmt_g17(r.mean_loss) << ','
       << trainer_detail::fmt_g17(r.data_term) << ','
       << trainer_detail::fmt_g17(r.penalty_term) << '\n';
}

inline void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& recs) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_eval_csv: cannot open " + path);
  os << "batch,time_level,l2sq_error,energy_dev_mean,energy_dev_std\n";
  for (const auto& r : recs)
    os << r.batch << ',' << r.time_level << ','
       << trainer_detail::fmt_g17(r.l2sq_error) << ','
       << trainer_detail::fmt_g17(r.energy_dev_mean) << ','
       << trainer_detail::fmt_g17(r.energy_dev_std) << '\n';
}

}  // namespace swe
