#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "stcl/augment.hpp"
#include "stcl/encoder.hpp"
#include "stcl/tensor.hpp"

namespace stcl {

// Momentum-encoder state for the time-domain loss: the EMA weight copy and
// the fixed-size FIFO of past key vectors serving as negatives.
struct MoCoState {
  MomentumParams momentum;
  std::vector<double> queue;  // [K, key_dim] row-major, unit-norm rows
  std::size_t K = 256;
  std::size_t key_dim = 0;
  std::size_t next = 0;  // ring insertion cursor
  double m_ema = 0.999;
  double tau = 0.07;
};

inline MoCoState init_moco(const EncoderParams& online, const EncoderConfig& cfg,
                           std::size_t K, double m_ema, double tau, Rng& rng) {
  if (tau <= 0.0) throw config_error("moco: temperature must be positive");
  if (m_ema < 0.0 || m_ema > 1.0) throw config_error("moco: m_ema must be in [0, 1]");
  MoCoState st;
  st.momentum = make_momentum_copy(online);
  st.K = K;
  st.key_dim = cfg.head_dim();
  st.m_ema = m_ema;
  st.tau = tau;
  st.queue.resize(K * st.key_dim);
  for (std::size_t i = 0; i < K; ++i) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (std::size_t j = 0; j < st.key_dim; ++j) {
        const double v = rng.normal();
        st.queue[i * st.key_dim + j] = v;
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < st.key_dim; ++j) st.queue[i * st.key_dim + j] *= inv;
  }
  return st;
}

inline Tensor queue_snapshot(const MoCoState& st) {
  return Tensor({st.K, st.key_dim}, st.queue);
}

// Push N new keys, dropping the N oldest (ring overwrite; the queue always
// holds exactly K rows).
inline void enqueue_keys(MoCoState& st, const Tensor& keys) {
  if (keys.rank() != 2 || keys.dim(1) != st.key_dim) {
    throw dim_error("enqueue_keys: keys " + shape_str(keys.shape()) +
                    " incompatible with queue of width " + std::to_string(st.key_dim));
  }
  if (st.K == 0) return;  // zero-capacity queue drops everything
  const double* pk = keys.data().data();
  for (std::size_t i = 0; i < keys.dim(0); ++i) {
    std::copy(pk + i * st.key_dim, pk + (i + 1) * st.key_dim,
              st.queue.begin() + static_cast<std::ptrdiff_t>(st.next * st.key_dim));
    st.next = (st.next + 1) % st.K;
  }
}

// theta_mom <- m * theta_mom + (1 - m) * theta_online, elementwise over the
// time-domain branch (backbone, TFD experts, projection head).
inline void momentum_update(const EncoderParams& online, MoCoState& st) {
  std::vector<std::pair<Tensor*, const Tensor*>> pairs;
  MomentumParams& m = st.momentum;
  pairs.emplace_back(&m.backbone.in_w, &online.backbone.in_w);
  pairs.emplace_back(&m.backbone.in_b, &online.backbone.in_b);
  if (m.backbone.blocks.size() != online.backbone.blocks.size() ||
      m.tfd.experts.size() != online.tfd.experts.size()) {
    throw dim_error("momentum_update: online and momentum parameter sets are incompatible");
  }
  for (std::size_t i = 0; i < m.backbone.blocks.size(); ++i) {
    pairs.emplace_back(&m.backbone.blocks[i].conv0, &online.backbone.blocks[i].conv0);
    pairs.emplace_back(&m.backbone.blocks[i].conv1, &online.backbone.blocks[i].conv1);
  }
  pairs.emplace_back(&m.backbone.out_w, &online.backbone.out_w);
  pairs.emplace_back(&m.backbone.out_b, &online.backbone.out_b);
  for (std::size_t i = 0; i < m.tfd.experts.size(); ++i) {
    pairs.emplace_back(&m.tfd.experts[i], &online.tfd.experts[i]);
  }
  pairs.emplace_back(&m.head.w, &online.head.w);
  pairs.emplace_back(&m.head.b, &online.head.b);

  for (auto& [mom, onl] : pairs) {
    if (mom->shape() != onl->shape()) {
      throw dim_error("momentum_update: shape mismatch " + shape_str(mom->shape()) +
                      " vs " + shape_str(onl->shape()) +
                      " (incompatible checkpoint)");
    }
    auto mv = mom->mutable_data();
    auto ov = onl->data();
    for (std::size_t i = 0; i < mv.size(); ++i) {
      mv[i] = st.m_ema * mv[i] + (1.0 - st.m_ema) * ov[i];
    }
  }
}

// InfoNCE summed over the batch: per row i,
//   -log( exp(q_i.k_i/tau) / (exp(q_i.k_i/tau) + sum_j exp(q_i.n_j/tau)) ).
// Gradients flow into q, k_pos and negatives as requested; K = 0 yields an
// exact zero (the fraction is 1 and its gradient vanishes identically).
inline Tensor infonce(const Tensor& q, const Tensor& k_pos, const Tensor& negatives,
                      double tau) {
  if (tau <= 0.0) throw config_error("infonce: temperature must be positive");
  if (q.rank() != 2 || k_pos.rank() != 2 || negatives.rank() != 2) {
    throw dim_error("infonce: expected 2-d q, k_pos, negatives");
  }
  require_same_shape(q.shape(), k_pos.shape(), "infonce");
  const std::size_t n = q.dim(0), p = q.dim(1);
  const std::size_t kneg = negatives.dim(0);
  if (kneg > 0 && negatives.dim(1) != p) {
    throw dim_error("infonce: negatives " + shape_str(negatives.shape()) +
                    " incompatible with queries " + shape_str(q.shape()));
  }
  if (kneg == 0) return Tensor::scalar(0.0);

  Tensor out = detail::op_output(Shape{}, {q, k_pos, negatives});
  const double* pq = q.data().data();
  const double* pk = k_pos.data().data();
  const double* pn = negatives.data().data();
  // probs[i] = softmax over the (K+1)-logit row [pos, neg_1..neg_K]
  auto probs = std::make_shared<std::vector<double>>(n * (kneg + 1));
  double total = 0.0;
  std::vector<double> z(kneg + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = pq + i * p;
    double pos = 0.0;
    for (std::size_t c = 0; c < p; ++c) pos += qi[c] * pk[i * p + c];
    z[0] = pos / tau;
    for (std::size_t j = 0; j < kneg; ++j) {
      double s = 0.0;
      const double* nj = pn + j * p;
      for (std::size_t c = 0; c < p; ++c) s += qi[c] * nj[c];
      z[j + 1] = s / tau;
    }
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const double lse = zmax + std::log(denom);
    total += lse - z[0];
    for (std::size_t j = 0; j <= kneg; ++j) {
      (*probs)[i * (kneg + 1) + j] = std::exp(z[j] - lse);
    }
  }
  out.mutable_data()[0] = total;
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* qn = q.node().get();
    Node* kn = k_pos.node().get();
    Node* nn = negatives.node().get();
    o->backward = [o, qn, kn, nn, probs, n, p, kneg, tau] {
      const double g = o->grad[0] / tau;
      for (std::size_t i = 0; i < n; ++i) {
        const double* pr = probs->data() + i * (kneg + 1);
        const double w_pos = g * (pr[0] - 1.0);
        if (qn->requires_grad) {
          double* gq = qn->grad_buf() + i * p;
          const double* ki = kn->value.data() + i * p;
          for (std::size_t c = 0; c < p; ++c) gq[c] += w_pos * ki[c];
          for (std::size_t j = 0; j < kneg; ++j) {
            const double w = g * pr[j + 1];
            const double* nj = nn->value.data() + j * p;
            for (std::size_t c = 0; c < p; ++c) gq[c] += w * nj[c];
          }
        }
        if (kn->requires_grad) {
          double* gk = kn->grad_buf() + i * p;
          const double* qi = qn->value.data() + i * p;
          for (std::size_t c = 0; c < p; ++c) gk[c] += w_pos * qi[c];
        }
        if (nn->requires_grad) {
          const double* qi = qn->value.data() + i * p;
          for (std::size_t j = 0; j < kneg; ++j) {
            const double w = g * pr[j + 1];
            double* gn = nn->grad_buf() + j * p;
            for (std::size_t c = 0; c < p; ++c) gn[c] += w * qi[c];
          }
        }
      }
    };
  }
  return out;
}

// InfoNCE over per-frequency feature vectors with in-batch negatives:
//   (1/(F N)) sum_i sum_j -log( exp(s1_ij.s2_ij)
//       / (exp(s1_ij.s2_ij) + sum_{k != j} exp(s1_ij.s1_ik)) ),
// with s1 = view features, s2 = augmented-view features, both [N, F, c].
// Raw dot products, no temperature.
inline Tensor freq_infonce(const Tensor& s1, const Tensor& s2) {
  require_same_shape(s1.shape(), s2.shape(), "freq_infonce");
  if (s1.rank() != 3) {
    throw dim_error("freq_infonce: expected [N, F, c], got " + shape_str(s1.shape()));
  }
  const std::size_t n = s1.dim(0), nf = s1.dim(1), c = s1.dim(2);
  if (n < 2) {
    throw dim_error("freq_infonce: need at least 2 samples for in-batch negatives, got " +
                    std::to_string(n));
  }
  Tensor out = detail::op_output(Shape{}, {s1, s2});
  const double* p1 = s1.data().data();
  const double* p2 = s2.data().data();
  const double scale = 1.0 / static_cast<double>(nf * n);
  // probs[(i*n + j)*n + k]: softmax weight of logit k in row (i, j); slot
  // k == j holds the positive-pair weight
  auto probs = std::make_shared<std::vector<double>>(nf * n * n);
  double total = 0.0;
  std::vector<double> z(n);
  for (std::size_t i = 0; i < nf; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* a = p1 + (j * nf + i) * c;
      for (std::size_t k = 0; k < n; ++k) {
        const double* b = (k == j) ? p2 + (j * nf + i) * c : p1 + (k * nf + i) * c;
        double s = 0.0;
        for (std::size_t t = 0; t < c; ++t) s += a[t] * b[t];
        z[k] = s;
      }
      double zmax = z[0];
      for (double v : z) zmax = std::max(zmax, v);
      double denom = 0.0;
      for (double v : z) denom += std::exp(v - zmax);
      const double lse = zmax + std::log(denom);
      total += lse - z[j];
      for (std::size_t k = 0; k < n; ++k) {
        (*probs)[(i * n + j) * n + k] = std::exp(z[k] - lse);
      }
    }
  }
  out.mutable_data()[0] = total * scale;
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* n1 = s1.node().get();
    Node* n2 = s2.node().get();
    o->backward = [o, n1, n2, probs, n, nf, c, scale] {
      const double g = o->grad[0] * scale;
      double* g1 = n1->requires_grad ? n1->grad_buf() : nullptr;
      double* g2 = n2->requires_grad ? n2->grad_buf() : nullptr;
      for (std::size_t i = 0; i < nf; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double* pr = probs->data() + (i * n + j) * n;
          const double* a = n1->value.data() + (j * nf + i) * c;
          // positive pair: d/dz = p_j - 1 on s1_ij . s2_ij
          const double wp = g * (pr[j] - 1.0);
          const double* b = n2->value.data() + (j * nf + i) * c;
          if (g1) {
            double* ga = g1 + (j * nf + i) * c;
            for (std::size_t t = 0; t < c; ++t) ga[t] += wp * b[t];
          }
          if (g2) {
            double* gb = g2 + (j * nf + i) * c;
            for (std::size_t t = 0; t < c; ++t) gb[t] += wp * a[t];
          }
          if (g1) {
            for (std::size_t k = 0; k < n; ++k) {
              if (k == j) continue;
              const double w = g * pr[k];
              const double* nk = n1->value.data() + (k * nf + i) * c;
              double* ga = g1 + (j * nf + i) * c;
              double* gk = g1 + (k * nf + i) * c;
              for (std::size_t t = 0; t < c; ++t) {
                ga[t] += w * nk[t];
                gk[t] += w * a[t];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

// Amplitude and phase losses over pre-inverse-DFT complex maps of the two
// views, [N, F, d_S] each.
inline std::pair<Tensor, Tensor> frequency_loss(const ComplexTensor& f_view,
                                                const ComplexTensor& f_aug) {
  require_same_shape(f_view.shape(), f_aug.shape(), "frequency_loss");
  Tensor l_amp = freq_infonce(amplitude(f_view), amplitude(f_aug));
  Tensor l_phase = freq_infonce(phase(f_view), phase(f_aug));
  return {l_amp, l_phase};
}

struct LossBreakdown {
  double l_time = 0.0;
  double l_amp = 0.0;
  double l_phase = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

inline LossBreakdown total_loss(double l_time, double l_amp, double l_phase, double alpha) {
  if (alpha < 0.0) throw config_error("total_loss: alpha must be >= 0");
  LossBreakdown b;
  b.l_time = l_time;
  b.l_amp = l_amp;
  b.l_phase = l_phase;
  b.alpha = alpha;
  b.total = l_time + (alpha / 2.0) * (l_amp + l_phase);
  return b;
}

// Time-domain loss given precomputed views: query view through the online
// trend path, key view through the momentum trend path, both projected at
// one shared random timestamp per sample. Returns the loss and the detached
// keys for the subsequent queue update.
struct TimeLossOut {
  Tensor loss;
  Tensor keys;  // [N, key_dim], unit rows, no grad
};

inline TimeLossOut time_loss_from_views(const Tensor& views_q, const Tensor& views_k,
                                        const std::vector<std::size_t>& t_idx,
                                        const EncoderConfig& cfg,
                                        const EncoderParams& online,
                                        const MoCoState& moco) {
  Tensor vq = trend_features(views_q, cfg, online.backbone, online.tfd);
  Tensor q = project(select_time(vq, t_idx), online.head);
  Tensor vk = trend_features(views_k, cfg, moco.momentum.backbone, moco.momentum.tfd);
  Tensor k = project(select_time(vk, t_idx), moco.momentum.head).detach();
  Tensor loss = infonce(q, k, queue_snapshot(moco), moco.tau);
  return {loss, k};
}

// Self-contained form: draws the two views and the shared timestep itself,
// computes the loss, then enqueues the new keys (dropping the oldest N).
inline Tensor time_domain_loss(const Tensor& batch_x, const EncoderConfig& cfg,
                               const EncoderParams& online, MoCoState& moco,
                               const AugmentConfig& acfg, Rng& rng) {
  if (batch_x.rank() != 3) {
    throw dim_error("time_domain_loss: expected [N, h, m], got " + shape_str(batch_x.shape()));
  }
  const std::size_t n = batch_x.dim(0), h = batch_x.dim(1), m = batch_x.dim(2);
  Tensor views_q({n, h, m});
  Tensor views_k({n, h, m});
  std::vector<std::size_t> t_idx(n);
  const double* px = batch_x.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    Tensor window({h, m}, std::vector<double>(px + i * h * m, px + (i + 1) * h * m));
    Tensor aq = augment(window, acfg, rng);
    Tensor ak = augment(window, acfg, rng);
    std::copy(aq.data().begin(), aq.data().end(),
              views_q.mutable_data().begin() + static_cast<std::ptrdiff_t>(i * h * m));
    std::copy(ak.data().begin(), ak.data().end(),
              views_k.mutable_data().begin() + static_cast<std::ptrdiff_t>(i * h * m));
    t_idx[i] = rng.index(h);
  }
  TimeLossOut out = time_loss_from_views(views_q, views_k, t_idx, cfg, online, moco);
  enqueue_keys(moco, out.keys);
  return out.loss;
}

}  // namespace stcl
