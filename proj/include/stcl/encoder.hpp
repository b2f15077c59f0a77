#pragma once

#include <bit>
#include <string>
#include <utility>
#include <vector>

#include "stcl/spectral.hpp"
#include "stcl/tensor.hpp"

namespace stcl {

// Architecture bookkeeping. The representation splits evenly into trend and
// seasonal halves (d even); the trend branch mixes L+1 causal-conv experts
// with kernel sizes 2^0..2^L where L = floor(log2(h/2)).
struct EncoderConfig {
  std::size_t m = 1;        // input channels
  std::size_t h = 64;       // lookback window length
  std::size_t hidden = 32;  // backbone channel width (full-scale: 64)
  std::size_t blocks = 4;   // backbone depth (full-scale: 10)
  std::size_t d = 64;       // representation width (full-scale: 320)
  std::size_t proj_dim = 0; // projection head width; 0 means d_T

  std::size_t d_trend() const { return d / 2; }
  std::size_t d_seasonal() const { return d / 2; }
  std::size_t expert_levels() const {  // L
    return static_cast<std::size_t>(std::bit_width(h / 2)) - 1;
  }
  std::size_t num_experts() const { return expert_levels() + 1; }
  std::size_t freq_count() const { return h / 2 + 1; }
  std::size_t head_dim() const { return proj_dim ? proj_dim : d_trend(); }

  void validate() const {
    if (m < 1) throw config_error("encoder: input channels must be >= 1");
    if (h < 4) throw config_error("encoder: window length must be >= 4, got " + std::to_string(h));
    if (hidden < 1 || blocks < 1) throw config_error("encoder: hidden and blocks must be >= 1");
    if (d < 2 || d % 2 != 0) {
      throw config_error("encoder: representation width must be even and >= 2, got " +
                         std::to_string(d));
    }
  }
};

struct ConvBlockParams {
  Tensor conv0;  // [3, hidden, hidden]
  Tensor conv1;  // [3, hidden, hidden]
};

struct BackboneParams {
  Tensor in_w, in_b;   // m -> hidden, applied per timestep
  std::vector<ConvBlockParams> blocks;
  Tensor out_w, out_b; // hidden -> d, applied per timestep
};

struct TfdParams {
  std::vector<Tensor> experts;  // expert i: [2^i, d, d_T]
};

struct HeadParams {
  Tensor w;  // [d_T, proj]
  Tensor b;  // [proj]
};

struct EncoderParams {
  BackboneParams backbone;
  TfdParams tfd;
  FourierLayerParams sfd;
  HeadParams head;

  std::vector<Tensor*> all() {
    std::vector<Tensor*> out{&backbone.in_w, &backbone.in_b};
    for (auto& blk : backbone.blocks) {
      out.push_back(&blk.conv0);
      out.push_back(&blk.conv1);
    }
    out.push_back(&backbone.out_w);
    out.push_back(&backbone.out_b);
    for (auto& e : tfd.experts) out.push_back(&e);
    out.push_back(&sfd.A.re);
    out.push_back(&sfd.A.im);
    out.push_back(&sfd.B.re);
    out.push_back(&sfd.B.im);
    out.push_back(&head.w);
    out.push_back(&head.b);
    return out;
  }

  std::vector<std::pair<std::string, Tensor*>> named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("backbone.in.w", &backbone.in_w);
    out.emplace_back("backbone.in.b", &backbone.in_b);
    for (std::size_t i = 0; i < backbone.blocks.size(); ++i) {
      out.emplace_back("backbone.block" + std::to_string(i) + ".conv0",
                       &backbone.blocks[i].conv0);
      out.emplace_back("backbone.block" + std::to_string(i) + ".conv1",
                       &backbone.blocks[i].conv1);
    }
    out.emplace_back("backbone.out.w", &backbone.out_w);
    out.emplace_back("backbone.out.b", &backbone.out_b);
    for (std::size_t i = 0; i < tfd.experts.size(); ++i) {
      out.emplace_back("tfd.expert" + std::to_string(i), &tfd.experts[i]);
    }
    out.emplace_back("sfd.a.re", &sfd.A.re);
    out.emplace_back("sfd.a.im", &sfd.A.im);
    out.emplace_back("sfd.b.re", &sfd.B.re);
    out.emplace_back("sfd.b.im", &sfd.B.im);
    out.emplace_back("head.w", &head.w);
    out.emplace_back("head.b", &head.b);
    return out;
  }
};

// Weight copy driving the time-domain key branch: backbone + trend
// disentangler + projection head. Never touched by the optimizer.
struct MomentumParams {
  BackboneParams backbone;
  TfdParams tfd;
  HeadParams head;
};

inline EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  p.backbone.in_w = kaiming_uniform({cfg.m, cfg.hidden}, cfg.m, rng);
  p.backbone.in_b = zeros_param({cfg.hidden});
  p.backbone.blocks.resize(cfg.blocks);
  for (auto& blk : p.backbone.blocks) {
    blk.conv0 = kaiming_uniform({3, cfg.hidden, cfg.hidden}, 3 * cfg.hidden, rng);
    blk.conv1 = kaiming_uniform({3, cfg.hidden, cfg.hidden}, 3 * cfg.hidden, rng);
  }
  p.backbone.out_w = kaiming_uniform({cfg.hidden, cfg.d}, cfg.hidden, rng);
  p.backbone.out_b = zeros_param({cfg.d});
  for (std::size_t i = 0; i < cfg.num_experts(); ++i) {
    const std::size_t ks = std::size_t{1} << i;
    p.tfd.experts.push_back(
        kaiming_uniform({ks, cfg.d, cfg.d_trend()}, ks * cfg.d, rng));
  }
  p.sfd = make_fourier_params(cfg.freq_count(), cfg.d, cfg.d_seasonal(), rng);
  p.head.w = kaiming_uniform({cfg.d_trend(), cfg.head_dim()}, cfg.d_trend(), rng);
  p.head.b = zeros_param({cfg.head_dim()});
  return p;
}

namespace detail {

inline BackboneParams copy_backbone(const BackboneParams& src) {
  BackboneParams dst;
  dst.in_w = src.in_w.clone(false);
  dst.in_b = src.in_b.clone(false);
  for (const auto& blk : src.blocks) {
    dst.blocks.push_back({blk.conv0.clone(false), blk.conv1.clone(false)});
  }
  dst.out_w = src.out_w.clone(false);
  dst.out_b = src.out_b.clone(false);
  return dst;
}

}  // namespace detail

// Detached deep copy with gradients disabled; forward passes through a
// frozen copy build no tape.
inline EncoderParams freeze(const EncoderParams& p) {
  EncoderParams f = p;  // shares nodes until the clone below
  for (Tensor* t : f.all()) *t = t->clone(false);
  return f;
}

inline MomentumParams make_momentum_copy(const EncoderParams& online) {
  MomentumParams m;
  m.backbone = detail::copy_backbone(online.backbone);
  for (const auto& e : online.tfd.experts) m.tfd.experts.push_back(e.clone(false));
  m.head = {online.head.w.clone(false), online.head.b.clone(false)};
  return m;
}

// x: [..., h, m] -> [..., h, d]. Per-step input projection, then residual
// blocks of (GELU, DilatedConv, GELU, DilatedConv) with dilation 2^i and
// kernel size 3, then a per-step output projection. Causal throughout.
inline Tensor backbone_forward(const Tensor& x, const EncoderConfig& cfg,
                               const BackboneParams& p) {
  if (x.rank() < 2 || x.shape().back() != cfg.m || x.dim(x.rank() - 2) != cfg.h) {
    throw dim_error("backbone_forward: input " + shape_str(x.shape()) +
                    " does not match config [h=" + std::to_string(cfg.h) +
                    ", m=" + std::to_string(cfg.m) + "]");
  }
  Tensor v = linear(x, p.in_w, p.in_b);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::size_t dilation = std::size_t{1} << i;
    Tensor t = gelu(v);
    t = causal_dilated_conv1d(t, p.blocks[i].conv0, dilation);
    t = gelu(t);
    t = causal_dilated_conv1d(t, p.blocks[i].conv1, dilation);
    v = add(v, t);  // identity skip; widths are constant across blocks
  }
  return linear(v, p.out_w, p.out_b);
}

// Mixture of causal auto-regressive experts, kernel size 2^i, average-pooled:
// [..., h, d] -> [..., h, d_T]
inline Tensor tfd_forward(const Tensor& v, const EncoderConfig& cfg, const TfdParams& p) {
  if (p.experts.empty()) throw dim_error("tfd_forward: no experts");
  Tensor acc = causal_dilated_conv1d(v, p.experts[0], 1);
  for (std::size_t i = 1; i < p.experts.size(); ++i) {
    acc = add(acc, causal_dilated_conv1d(v, p.experts[i], 1));
  }
  (void)cfg;
  return mul_scalar(acc, 1.0 / static_cast<double>(p.experts.size()));
}

// DFT along time -> per-frequency complex linear map -> inverse DFT.
// Returns the time-domain seasonal features and the pre-inverse complex map
// that feeds the frequency-domain losses.
inline std::pair<Tensor, ComplexTensor> sfd_forward(const Tensor& v,
                                                    const EncoderConfig& cfg,
                                                    const FourierLayerParams& p) {
  ComplexTensor spectrum = rdft_time(v);
  ComplexTensor mapped = fourier_layer(spectrum, p);
  Tensor vs = irdft_time(mapped, cfg.h);
  return {vs, mapped};
}

struct EncodeResult {
  Tensor V;    // [..., h, d] = [V_T ; V_S]
  Tensor V_T;  // [..., h, d_T]
  Tensor V_S;  // [..., h, d_S]
  ComplexTensor F_pre;  // [..., F, d_S]
};

inline EncodeResult encode(const Tensor& x, const EncoderConfig& cfg,
                           const EncoderParams& p) {
  Tensor v = backbone_forward(x, cfg, p.backbone);
  EncodeResult r;
  r.V_T = tfd_forward(v, cfg, p.tfd);
  auto [vs, fpre] = sfd_forward(v, cfg, p.sfd);
  r.V_S = vs;
  r.F_pre = fpre;
  r.V = concat_last(r.V_T, r.V_S);
  return r;
}

// Query/key path: backbone -> TFD only (the time-domain loss never sees the
// seasonal branch).
inline Tensor trend_features(const Tensor& x, const EncoderConfig& cfg,
                             const BackboneParams& backbone, const TfdParams& tfd) {
  return tfd_forward(backbone_forward(x, cfg, backbone), cfg, tfd);
}

// One-layer projection head followed by L2 normalization to the unit sphere.
inline Tensor project(const Tensor& v, const HeadParams& head) {
  return l2_normalize_last(linear(v, head.w, head.b));
}

}  // namespace stcl
