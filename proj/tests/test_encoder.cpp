#include <catch2/catch_amalgamated.hpp>

#include "stcl/encoder.hpp"
#include "stcl/grad_check.hpp"
#include "test_util.hpp"

using namespace stcl;
using test_util::max_abs_diff;
using test_util::random_tensor;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.m = 1;
  cfg.h = 8;
  cfg.hidden = 4;
  cfg.blocks = 2;
  cfg.d = 4;
  return cfg;
}

}  // namespace

TEST_CASE("config derives architecture constants from h") {
  EncoderConfig cfg;
  cfg.h = 16;
  CHECK(cfg.expert_levels() == 3);  // floor(log2(8))
  CHECK(cfg.num_experts() == 4);    // kernel sizes 1, 2, 4, 8
  cfg.h = 201;
  CHECK(cfg.num_experts() == 7);    // floor(log2(100.5)) = 6
  CHECK(cfg.freq_count() == 101);   // floor(201/2) + 1
  cfg.h = 64;
  CHECK(cfg.num_experts() == 6);
  CHECK(cfg.freq_count() == 33);

  EncoderConfig bad;
  bad.d = 7;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = EncoderConfig{};
  bad.h = 3;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("backbone zero input with zero biases maps to zero") {
  Rng rng(61);
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_encoder(cfg, rng);  // biases init to zero
  Tensor x({cfg.h, cfg.m}, 0.0);
  Tensor v = backbone_forward(x, cfg, p.backbone);
  REQUIRE(v.shape() == Shape{cfg.h, cfg.d});
  for (double val : v.data()) CHECK(val == 0.0);
}

TEST_CASE("backbone output shape and input checking") {
  Rng rng(67);
  EncoderConfig cfg;
  cfg.m = 2;
  cfg.h = 16;
  cfg.hidden = 4;
  cfg.blocks = 2;
  cfg.d = 8;
  EncoderParams p = init_encoder(cfg, rng);
  Tensor x = random_tensor({cfg.h, cfg.m}, rng);
  CHECK(backbone_forward(x, cfg, p.backbone).shape() == Shape{16, 8});
  CHECK_THROWS_AS(backbone_forward(Tensor({16, 3}), cfg, p.backbone), dim_error);
  CHECK_THROWS_AS(backbone_forward(Tensor({8, 2}), cfg, p.backbone), dim_error);
}

TEST_CASE("backbone is causal: a final-timestamp perturbation moves only the final row") {
  Rng rng(71);
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_encoder(cfg, rng);
  Tensor x = random_tensor({cfg.h, cfg.m}, rng);
  Tensor v0 = backbone_forward(x, cfg, p.backbone);
  Tensor x2 = x.detach();
  x2.mutable_data()[(cfg.h - 1) * cfg.m] += 1.0;
  Tensor v1 = backbone_forward(x2, cfg, p.backbone);
  for (std::size_t t = 0; t + 1 < cfg.h; ++t) {
    for (std::size_t j = 0; j < cfg.d; ++j) {
      CHECK(v0.data()[t * cfg.d + j] == v1.data()[t * cfg.d + j]);
    }
  }
  double moved = 0.0;
  for (std::size_t j = 0; j < cfg.d; ++j) {
    moved += std::fabs(v0.data()[(cfg.h - 1) * cfg.d + j] - v1.data()[(cfg.h - 1) * cfg.d + j]);
  }
  CHECK(moved > 0.0);
}

TEST_CASE("tfd averages identical identity experts back to the input") {
  // d == d_T here: the averaging contract does not depend on the even split
  const std::size_t h = 16, d = 4;
  TfdParams tfd;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t ks = std::size_t{1} << i;
    Tensor kernel({ks, d, d}, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      kernel.mutable_data()[((ks - 1) * d + j) * d + j] = 1.0;  // identity at the current step
    }
    tfd.experts.push_back(kernel);
  }
  Rng rng(73);
  Tensor v = random_tensor({h, d}, rng);
  EncoderConfig cfg = tiny_config();
  Tensor out = tfd_forward(v, cfg, tfd);
  CHECK(max_abs_diff(out, v) < 1e-12);
}

TEST_CASE("tfd expert sizes follow 2^i and the output is causal") {
  Rng rng(79);
  EncoderConfig cfg;
  cfg.h = 16;
  cfg.hidden = 4;
  cfg.blocks = 1;
  cfg.d = 8;
  EncoderParams p = init_encoder(cfg, rng);
  REQUIRE(p.tfd.experts.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.tfd.experts[i].shape() ==
          Shape{std::size_t{1} << i, cfg.d, cfg.d_trend()});
  }
  Tensor v = random_tensor({cfg.h, cfg.d}, rng);
  Tensor out0 = tfd_forward(v, cfg, p.tfd);
  const std::size_t t = 5;
  Tensor v2 = v.detach();
  v2.mutable_data()[t * cfg.d + 3] += 2.0;
  Tensor out1 = tfd_forward(v2, cfg, p.tfd);
  for (std::size_t tt = 0; tt < t; ++tt) {
    for (std::size_t j = 0; j < cfg.d_trend(); ++j) {
      CHECK(out0.data()[tt * cfg.d_trend() + j] == out1.data()[tt * cfg.d_trend() + j]);
    }
  }
}

TEST_CASE("sfd with identity parameters is a DFT round trip") {
  Rng rng(83);
  const std::size_t h = 8, d = 3;
  EncoderConfig cfg;
  cfg.h = h;
  cfg.d = 4;  // unused by sfd_forward beyond h
  const std::size_t nf = h / 2 + 1;
  FourierLayerParams p;
  Tensor are({nf, d, d}, 0.0);
  for (std::size_t i = 0; i < nf; ++i) {
    for (std::size_t j = 0; j < d; ++j) are.mutable_data()[(i * d + j) * d + j] = 1.0;
  }
  p.A = ComplexTensor(are, Tensor({nf, d, d}, 0.0));
  p.B = ComplexTensor(Tensor({nf, d}, 0.0), Tensor({nf, d}, 0.0));
  Tensor v = random_tensor({h, d}, rng);
  auto [vs, fpre] = sfd_forward(v, cfg, p);
  CHECK(fpre.shape() == Shape{nf, d});  // floor(8/2)+1 = 5 frequencies
  REQUIRE(nf == 5);
  CHECK(max_abs_diff(vs, v) < 1e-9);
}

TEST_CASE("sfd bias path: zero input yields the inverse transform of B") {
  const std::size_t h = 8, d = 2, ds = 2, nf = h / 2 + 1;
  EncoderConfig cfg;
  cfg.h = h;
  Rng rng(89);
  FourierLayerParams p;
  p.A = ComplexTensor(random_tensor({nf, d, ds}, rng), random_tensor({nf, d, ds}, rng));
  p.B = ComplexTensor(random_tensor({nf, ds}, rng), random_tensor({nf, ds}, rng));
  Tensor zero({h, d}, 0.0);
  auto [vs, fpre] = sfd_forward(zero, cfg, p);
  // direct-evaluation oracle: inverse transform of the bias alone
  Tensor direct = irdft_time(ComplexTensor(p.B.re.detach(), p.B.im.detach()), h);
  CHECK(max_abs_diff(fpre.re, p.B.re) == 0.0);
  CHECK(max_abs_diff(fpre.im, p.B.im) == 0.0);
  CHECK(max_abs_diff(vs, direct) < 1e-12);
}

TEST_CASE("encode concatenates the trend and seasonal halves") {
  Rng rng(97);
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_encoder(cfg, rng);
  Tensor x = random_tensor({cfg.h, cfg.m}, rng);
  EncodeResult r = encode(x, cfg, p);
  REQUIRE(r.V.shape() == Shape{cfg.h, cfg.d});
  REQUIRE(r.V_T.shape() == Shape{cfg.h, cfg.d_trend()});
  REQUIRE(r.V_S.shape() == Shape{cfg.h, cfg.d_seasonal()});
  CHECK(r.F_pre.shape() == Shape{cfg.freq_count(), cfg.d_seasonal()});
  for (std::size_t t = 0; t < cfg.h; ++t) {
    for (std::size_t j = 0; j < cfg.d_trend(); ++j) {
      CHECK(r.V.data()[t * cfg.d + j] == r.V_T.data()[t * cfg.d_trend() + j]);
    }
    for (std::size_t j = 0; j < cfg.d_seasonal(); ++j) {
      CHECK(r.V.data()[t * cfg.d + cfg.d_trend() + j] ==
            r.V_S.data()[t * cfg.d_seasonal() + j]);
    }
  }
}

TEST_CASE("encode is deterministic and seed-sensitive") {
  EncoderConfig cfg = tiny_config();
  Rng rng_a(1), rng_b(1), rng_c(2);
  EncoderParams pa = init_encoder(cfg, rng_a);
  EncoderParams pb = init_encoder(cfg, rng_b);
  EncoderParams pc = init_encoder(cfg, rng_c);
  Rng xr(5);
  Tensor x = random_tensor({cfg.h, cfg.m}, xr);
  EncodeResult ra = encode(x, cfg, pa);
  EncodeResult rb = encode(x, cfg, pb);
  EncodeResult rc = encode(x, cfg, pc);
  CHECK(max_abs_diff(ra.V, rb.V) == 0.0);  // bitwise purity
  CHECK(max_abs_diff(ra.V, rc.V) > 0.0);   // parameters differ across seeds
}

TEST_CASE("trend half of the representation is causal at every timestep") {
  Rng rng(101);
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_encoder(cfg, rng);
  for (int probe = 0; probe < 5; ++probe) {
    Tensor x = random_tensor({cfg.h, cfg.m}, rng);
    EncodeResult r0 = encode(x, cfg, p);
    const std::size_t t = 1 + rng.index(cfg.h - 1);
    Tensor x2 = x.detach();
    x2.mutable_data()[t * cfg.m] += 0.37;
    EncodeResult r1 = encode(x2, cfg, p);
    for (std::size_t tt = 0; tt < t; ++tt) {
      for (std::size_t j = 0; j < cfg.d_trend(); ++j) {
        CHECK(r0.V_T.data()[tt * cfg.d_trend() + j] == r1.V_T.data()[tt * cfg.d_trend() + j]);
      }
    }
  }
}

TEST_CASE("project normalizes to the unit sphere and defaults to d_T width") {
  Rng rng(103);
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_encoder(cfg, rng);
  CHECK(cfg.head_dim() == cfg.d_trend());
  Tensor v = random_tensor({cfg.d_trend()}, rng);
  Tensor q = project(v, p.head);
  REQUIRE(q.shape() == Shape{cfg.head_dim()});
  double n2 = 0.0;
  for (double val : q.data()) n2 += val * val;
  CHECK(std::fabs(std::sqrt(n2) - 1.0) < 1e-9);

  // bias-free head: scaling the input leaves the normalized output unchanged
  HeadParams head{p.head.w, Tensor({cfg.head_dim()}, 0.0)};
  Tensor q1 = project(v, head);
  Tensor q2 = project(mul_scalar(v, 2.0), head);
  CHECK(max_abs_diff(q1, q2) < 1e-12);
}

TEST_CASE("shape contract holds over a grid including odd h") {
  Rng rng(107);
  for (std::size_t h : {7u, 12u, 16u, 33u}) {
    for (std::size_t m : {1u, 3u}) {
      for (std::size_t d : {4u, 6u}) {
        EncoderConfig cfg;
        cfg.m = m;
        cfg.h = h;
        cfg.hidden = 4;
        cfg.blocks = 2;
        cfg.d = d;
        EncoderParams p = init_encoder(cfg, rng);
        Tensor x = random_tensor({h, m}, rng);
        EncodeResult r = encode(x, cfg, p);
        CHECK(r.V.shape() == Shape{h, d});
        CHECK(r.V_T.shape() == Shape{h, d / 2});
        CHECK(r.V_S.shape() == Shape{h, d / 2});
        CHECK(r.F_pre.shape() == Shape{h / 2 + 1, d / 2});
      }
    }
  }
}

TEST_CASE("full pipeline gradient check on a tiny config") {
  Rng rng(109);
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_encoder(cfg, rng);
  Tensor x = random_tensor({cfg.h, cfg.m}, rng, true);
  std::vector<Tensor> inputs;
  inputs.push_back(x);
  for (Tensor* t : p.all()) inputs.push_back(*t);
  auto f = [&cfg, &p, &x](const std::vector<Tensor>& in) {
    // inputs alias the parameter tensors; grad_check perturbs them in place.
    // quadratic reduction: a plain sum has exactly-zero gradients along the
    // non-DC spectral directions, where finite-difference noise would swamp
    // the floored relative-error metric
    (void)in;
    Tensor v = encode(x, cfg, p).V;
    return sum(mul(v, v));
  };
  CHECK(grad_check(f, inputs) < 1e-4);
}

TEST_CASE("batched encode agrees with per-sample encode") {
  Rng rng(113);
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_encoder(cfg, rng);
  const std::size_t n = 3;
  Tensor xb = random_tensor({n, cfg.h, cfg.m}, rng);
  EncodeResult rb = encode(xb, cfg, p);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor xi({cfg.h, cfg.m},
              std::vector<double>(xb.data().begin() + static_cast<std::ptrdiff_t>(i * cfg.h * cfg.m),
                                  xb.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * cfg.h * cfg.m)));
    EncodeResult ri = encode(xi, cfg, p);
    const double diff = test_util::max_abs_diff(
        std::span<const double>(rb.V.data().data() + i * cfg.h * cfg.d, cfg.h * cfg.d),
        ri.V.data());
    CHECK(diff < 1e-12);
  }
}
