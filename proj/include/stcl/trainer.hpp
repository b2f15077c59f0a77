#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stcl/augment.hpp"
#include "stcl/contrastive.hpp"
#include "stcl/dataset.hpp"
#include "stcl/encoder.hpp"
#include "stcl/optim.hpp"

namespace stcl {

struct TrainConfig {
  std::size_t batch_size = 32;   // paper-scale default is 256
  std::size_t iterations = 200;  // 600 for large datasets
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double alpha = 5e-4;
  std::size_t queue_size = 256;
  double m_ema = 0.999;
  double tau = 0.07;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const {
    if (iterations < 1) throw config_error("train: iterations must be >= 1");
    if (batch_size < 2) {
      throw config_error("train: batch_size must be >= 2 (frequency loss needs in-batch negatives)");
    }
    if (alpha < 0.0) throw config_error("train: alpha must be >= 0");
    augment.validate();
  }
};

struct StepLog {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown losses;
};

// batch_size windows of length h with independently uniform start offsets;
// multiple series are pooled so every valid (series, offset) pair is equally
// likely.
inline Tensor sample_batch(const std::vector<Series>& splits, std::size_t h,
                           std::size_t batch_size, Rng& rng) {
  if (splits.empty()) throw data_error("sample_batch: no series");
  const std::size_t m = splits[0].channels();
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (series, max offset count)
  std::size_t total = 0;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    if (splits[s].channels() != m) {
      throw dim_error("sample_batch: series channel counts differ");
    }
    if (splits[s].length() < h) continue;
    const std::size_t count = splits[s].length() - h + 1;
    pool.emplace_back(s, count);
    total += count;
  }
  if (total == 0) {
    throw data_error("sample_batch: every split is shorter than the window length " +
                     std::to_string(h));
  }
  Tensor batch({batch_size, h, m});
  double* pb = batch.mutable_data().data();
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::size_t pick = rng.index(total);
    std::size_t s = 0;
    while (pick >= pool[s].second) {
      pick -= pool[s].second;
      ++s;
    }
    const double* pv = splits[pool[s].first].values.data().data();
    std::copy(pv + pick * m, pv + (pick + h) * m, pb + i * h * m);
  }
  return batch;
}

// One representation-learning run: per step, sample a batch, draw two views,
// push the query view through the online encoder (trend + seasonal), the key
// view through both the online encoder (for the frequency losses) and the
// momentum encoder (for the keys), combine the losses, and update.
class Trainer {
 public:
  Trainer(std::vector<Series> train_splits, EncoderConfig enc_cfg, TrainConfig cfg)
      : splits_(std::move(train_splits)),
        enc_cfg_(enc_cfg),
        cfg_(cfg),
        rng_(cfg.seed) {
    cfg_.validate();
    enc_cfg_.validate();
    params_ = init_encoder(enc_cfg_, rng_);
    moco_ = init_moco(params_, enc_cfg_, cfg_.queue_size, cfg_.m_ema, cfg_.tau, rng_);
    param_ptrs_ = params_.all();
    optim_ = make_optim(param_ptrs_, cfg_.base_lr, cfg_.momentum, cfg_.weight_decay,
                        cfg_.iterations);
  }

  StepLog step() {
    const std::size_t n = cfg_.batch_size;
    const std::size_t h = enc_cfg_.h, m = enc_cfg_.m;
    Tensor batch = sample_batch(splits_, h, n, rng_);

    Tensor views_q({n, h, m});
    Tensor views_k({n, h, m});
    std::vector<std::size_t> t_idx(n);
    const double* pb = batch.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      Tensor window({h, m}, std::vector<double>(pb + i * h * m, pb + (i + 1) * h * m));
      Tensor aq = augment(window, cfg_.augment, rng_);
      Tensor ak = augment(window, cfg_.augment, rng_);
      std::copy(aq.data().begin(), aq.data().end(),
                views_q.mutable_data().begin() + static_cast<std::ptrdiff_t>(i * h * m));
      std::copy(ak.data().begin(), ak.data().end(),
                views_k.mutable_data().begin() + static_cast<std::ptrdiff_t>(i * h * m));
      t_idx[i] = rng_.index(h);
    }

    zero_grads(param_ptrs_);

    // online forward on both views; the inverse DFT is not needed here, only
    // the pre-inverse maps feed the losses
    Tensor vq_tilde = backbone_forward(views_q, enc_cfg_, params_.backbone);
    Tensor vk_tilde = backbone_forward(views_k, enc_cfg_, params_.backbone);
    ComplexTensor fpre_q = fourier_layer(rdft_time(vq_tilde), params_.sfd);
    ComplexTensor fpre_k = fourier_layer(rdft_time(vk_tilde), params_.sfd);

    Tensor vt_q = tfd_forward(vq_tilde, enc_cfg_, params_.tfd);
    Tensor q = project(select_time(vt_q, t_idx), params_.head);
    Tensor vt_k = trend_features(views_k, enc_cfg_, moco_.momentum.backbone, moco_.momentum.tfd);
    Tensor keys = project(select_time(vt_k, t_idx), moco_.momentum.head).detach();

    Tensor l_time = infonce(q, keys, queue_snapshot(moco_), moco_.tau);
    auto [l_amp, l_phase] = frequency_loss(fpre_q, fpre_k);
    Tensor total = add(l_time, mul_scalar(add(l_amp, l_phase), cfg_.alpha / 2.0));

    StepLog log;
    log.step = optim_.step;
    log.lr = cosine_lr(cfg_.base_lr, optim_.step, cfg_.iterations);
    log.losses = total_loss(l_time.item(), l_amp.item(), l_phase.item(), cfg_.alpha);
    if (!std::isfinite(log.losses.total)) {
      throw numeric_error(
          "train: non-finite loss at step " + std::to_string(log.step) +
          " (l_time=" + std::to_string(log.losses.l_time) +
          ", l_amp=" + std::to_string(log.losses.l_amp) +
          ", l_phase=" + std::to_string(log.losses.l_phase) + ")");
    }

    total.backward();
    sgd_step(param_ptrs_, optim_);
    momentum_update(params_, moco_);
    enqueue_keys(moco_, keys);
    return log;
  }

  std::vector<StepLog> run() {
    std::vector<StepLog> log;
    log.reserve(cfg_.iterations);
    while (optim_.step < cfg_.iterations) log.push_back(step());
    return log;
  }

  EncoderParams& params() { return params_; }
  MoCoState& moco() { return moco_; }
  OptimState& optim() { return optim_; }
  const EncoderConfig& encoder_config() const { return enc_cfg_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  std::vector<Series> splits_;
  EncoderConfig enc_cfg_;
  TrainConfig cfg_;
  Rng rng_;
  EncoderParams params_;
  MoCoState moco_;
  std::vector<Tensor*> param_ptrs_;
  OptimState optim_;
};

struct TrainResult {
  EncoderParams params;
  std::vector<StepLog> log;
};

inline TrainResult train(std::vector<Series> train_splits, const EncoderConfig& enc_cfg,
                         const TrainConfig& cfg) {
  Trainer tr(std::move(train_splits), enc_cfg, cfg);
  TrainResult res;
  res.log = tr.run();
  res.params = std::move(tr.params());
  return res;
}

}  // namespace stcl
