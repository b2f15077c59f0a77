#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stcl/contrastive.hpp"
#include "stcl/grad_check.hpp"
#include "test_util.hpp"

using namespace stcl;
using test_util::max_abs_diff;
using test_util::random_tensor;

namespace {

Tensor unit_rows(Shape shape, Rng& rng) {
  return l2_normalize_last(random_tensor(std::move(shape), rng)).detach();
}

// brute-force reference for the per-frequency InfoNCE, straight from the
// printed double sum with explicit dot-product loops
double freq_infonce_reference(const std::vector<double>& s1, const std::vector<double>& s2,
                              std::size_t n, std::size_t nf, std::size_t c) {
  auto dot = [&](const std::vector<double>& a, std::size_t ja, const std::vector<double>& b,
                 std::size_t jb, std::size_t i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < c; ++t) {
      acc += a[(ja * nf + i) * c + t] * b[(jb * nf + i) * c + t];
    }
    return acc;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < nf; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double pos = dot(s1, j, s2, j, i);
      double denom = std::exp(pos);
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j) continue;
        denom += std::exp(dot(s1, j, s1, k, i));
      }
      total += -std::log(std::exp(pos) / denom);
    }
  }
  return total / static_cast<double>(nf * n);
}

}  // namespace

TEST_CASE("infonce with an empty queue is exactly zero") {
  Rng rng(201);
  Tensor q = unit_rows({3, 4}, rng);
  Tensor k = unit_rows({3, 4}, rng);
  Tensor none({0, 4});
  CHECK(infonce(q, k, none, 0.07).item() == 0.0);
}

TEST_CASE("infonce uniform logits equal N log(K+1)") {
  Rng rng(203);
  const std::size_t n = 5, p = 6, kneg = 7;
  // all rows identical, so every positive and negative similarity coincides
  Tensor row = unit_rows({1, p}, rng);
  Tensor qn({n, p});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(row.data().begin(), row.data().end(),
              qn.mutable_data().begin() + static_cast<std::ptrdiff_t>(i * p));
  }
  Tensor kn = qn.detach();
  Tensor negs({kneg, p});
  for (std::size_t j = 0; j < kneg; ++j) {
    std::copy(row.data().begin(), row.data().end(),
              negs.mutable_data().begin() + static_cast<std::ptrdiff_t>(j * p));
  }
  const double loss = infonce(qn, kn, negs, 0.07).item();
  CHECK(std::fabs(loss - n * std::log(static_cast<double>(kneg + 1))) <= 1e-12);
}

TEST_CASE("infonce matches a hand-evaluated two-sample case") {
  // 2 samples, 1 negative, tau = 0.5, p = 2
  Tensor q({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor k({2, 2}, {0.6, 0.8, 0.8, 0.6});
  Tensor neg({1, 2}, {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
  const double tau = 0.5;
  const double s = 1.0 / std::sqrt(2.0);
  // row 0: pos = 0.6/tau, neg = s/tau; row 1: pos = 0.6/tau, neg = s/tau
  const double pos = 0.6 / tau;
  const double ng = s / tau;
  const double expected =
      2.0 * (-std::log(std::exp(pos) / (std::exp(pos) + std::exp(ng))));
  CHECK(std::fabs(infonce(q, k, neg, tau).item() - expected) <= 1e-12);
}

TEST_CASE("infonce is nonnegative and summed over the batch") {
  Rng rng(207);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor q = unit_rows({4, 5}, rng);
    Tensor k = unit_rows({4, 5}, rng);
    Tensor negs = unit_rows({6, 5}, rng);
    CHECK(infonce(q, k, negs, 0.07).item() >= 0.0);
  }
  CHECK_THROWS_AS(infonce(unit_rows({2, 3}, rng), unit_rows({2, 3}, rng),
                          unit_rows({2, 3}, rng), 0.0),
                  config_error);
}

TEST_CASE("infonce gradients pass grad_check") {
  Rng rng(209);
  std::vector<Tensor> inputs = {random_tensor({3, 4}, rng, true),
                                random_tensor({3, 4}, rng, true),
                                random_tensor({5, 4}, rng, true)};
  auto f = [](const std::vector<Tensor>& in) {
    return infonce(l2_normalize_last(in[0]), l2_normalize_last(in[1]),
                   l2_normalize_last(in[2]), 0.3);
  };
  CHECK(grad_check(f, inputs) < 1e-4);
}

TEST_CASE("freq_infonce matches the quadruple-loop reference on random instances") {
  Rng rng(211);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng.index(3);   // 2..4
    const std::size_t nf = 1 + rng.index(5);  // 1..5
    const std::size_t c = 1 + rng.index(3);   // 1..3
    Tensor s1 = random_tensor({n, nf, c}, rng);
    Tensor s2 = random_tensor({n, nf, c}, rng);
    const double got = freq_infonce(s1, s2).item();
    const double want = freq_infonce_reference(
        std::vector<double>(s1.data().begin(), s1.data().end()),
        std::vector<double>(s2.data().begin(), s2.data().end()), n, nf, c);
    CHECK(std::fabs(got - want) <= 1e-12);
  }
}

TEST_CASE("frequency_loss uniform case gives log N for amplitude and phase") {
  const std::size_t n = 4, nf = 3, c = 2;
  // identical positive-real vectors everywhere: amplitudes all equal, phases 0
  ComplexTensor f1(Tensor({n, nf, c}, 0.8), Tensor({n, nf, c}, 0.0));
  ComplexTensor f2(Tensor({n, nf, c}, 0.8), Tensor({n, nf, c}, 0.0));
  auto [l_amp, l_phase] = frequency_loss(f1, f2);
  CHECK(std::fabs(l_amp.item() - std::log(static_cast<double>(n))) <= 1e-12);
  CHECK(std::fabs(l_phase.item() - std::log(static_cast<double>(n))) <= 1e-12);
}

TEST_CASE("frequency_loss separable case drives the loss toward zero") {
  // two samples with orthogonal amplitude vectors and a strong positive pair
  const std::size_t n = 2, nf = 1, c = 2;
  Tensor re({n, nf, c}, {4.0, 0.0, 0.0, 4.0});
  ComplexTensor f1(re, Tensor({n, nf, c}, 0.0));
  ComplexTensor f2(re.detach(), Tensor({n, nf, c}, 0.0));
  auto [l_amp, l_phase] = frequency_loss(f1, f2);
  // amplitude: pos = 16, cross = 0 -> -log(e^16/(e^16+1))
  const double expected = -std::log(std::exp(16.0) / (std::exp(16.0) + 1.0));
  CHECK(std::fabs(l_amp.item() - expected) <= 1e-12);
  CHECK(l_amp.item() < 1e-6);
}

TEST_CASE("frequency_loss is invariant to permuting the batch") {
  Rng rng(213);
  const std::size_t n = 4, nf = 3, c = 2;
  Tensor s1 = random_tensor({n, nf, c}, rng);
  Tensor s2 = random_tensor({n, nf, c}, rng);
  const double base = freq_infonce(s1, s2).item();
  const std::size_t perm[n] = {2, 0, 3, 1};
  Tensor p1({n, nf, c});
  Tensor p2({n, nf, c});
  for (std::size_t j = 0; j < n; ++j) {
    std::copy(s1.data().begin() + static_cast<std::ptrdiff_t>(perm[j] * nf * c),
              s1.data().begin() + static_cast<std::ptrdiff_t>((perm[j] + 1) * nf * c),
              p1.mutable_data().begin() + static_cast<std::ptrdiff_t>(j * nf * c));
    std::copy(s2.data().begin() + static_cast<std::ptrdiff_t>(perm[j] * nf * c),
              s2.data().begin() + static_cast<std::ptrdiff_t>((perm[j] + 1) * nf * c),
              p2.mutable_data().begin() + static_cast<std::ptrdiff_t>(j * nf * c));
  }
  CHECK(std::fabs(freq_infonce(p1, p2).item() - base) <= 1e-12);
}

TEST_CASE("freq_infonce needs at least two samples") {
  Rng rng(217);
  Tensor s = random_tensor({1, 2, 2}, rng);
  CHECK_THROWS_AS(freq_infonce(s, s), dim_error);
}

TEST_CASE("freq_infonce gradients pass grad_check") {
  Rng rng(219);
  std::vector<Tensor> inputs = {random_tensor({3, 2, 2}, rng, true),
                                random_tensor({3, 2, 2}, rng, true)};
  auto f = [](const std::vector<Tensor>& in) { return freq_infonce(in[0], in[1]); };
  CHECK(grad_check(f, inputs) < 1e-4);
}

TEST_CASE("total_loss composition") {
  LossBreakdown b = total_loss(1.0, 2.0, 4.0, 0.5);
  CHECK(b.total == Catch::Approx(2.5).margin(1e-15));
  CHECK(std::fabs(b.total - (b.l_time + b.alpha / 2.0 * (b.l_amp + b.l_phase))) <= 1e-12);

  CHECK(total_loss(3.7, 100.0, 50.0, 0.0).total == 3.7);
  CHECK(total_loss(1.0, 1000.0, 1000.0, 5e-4).total == Catch::Approx(1.5).margin(1e-12));
  CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.0, -0.1), config_error);
}

namespace {

struct TinySetup {
  EncoderConfig cfg;
  EncoderParams params;
  MoCoState moco;
};

TinySetup tiny_setup(std::uint64_t seed, std::size_t K) {
  TinySetup s;
  s.cfg.m = 1;
  s.cfg.h = 8;
  s.cfg.hidden = 4;
  s.cfg.blocks = 1;
  s.cfg.d = 4;
  Rng rng(seed);
  s.params = init_encoder(s.cfg, rng);
  s.moco = init_moco(s.params, s.cfg, K, 0.999, 0.07, rng);
  return s;
}

}  // namespace

TEST_CASE("momentum_update limit cases and hand arithmetic") {
  TinySetup s = tiny_setup(221, 4);
  std::vector<double> online_before(s.params.backbone.in_w.data().begin(),
                                    s.params.backbone.in_w.data().end());
  SECTION("m_ema = 0 copies the online weights") {
    s.moco.m_ema = 0.0;
    momentum_update(s.params, s.moco);
    CHECK(max_abs_diff(s.moco.momentum.backbone.in_w, s.params.backbone.in_w) == 0.0);
  }
  SECTION("m_ema = 1 freezes the momentum weights") {
    Tensor before = s.moco.momentum.backbone.in_w.detach();
    // move the online weights so a faulty update would show
    for (double& v : s.params.backbone.in_w.mutable_data()) v += 1.0;
    s.moco.m_ema = 1.0;
    momentum_update(s.params, s.moco);
    CHECK(max_abs_diff(s.moco.momentum.backbone.in_w, before) == 0.0);
  }
  SECTION("m_ema = 0.999 from zero toward one") {
    for (double& v : s.moco.momentum.head.w.mutable_data()) v = 0.0;
    for (double& v : s.params.head.w.mutable_data()) v = 1.0;
    momentum_update(s.params, s.moco);
    for (double v : s.moco.momentum.head.w.data()) {
      CHECK(v == Catch::Approx(0.001).margin(1e-15));
    }
  }
  SECTION("online parameters never move") {
    momentum_update(s.params, s.moco);
    CHECK(max_abs_diff(s.params.backbone.in_w.data(), online_before) == 0.0);
  }
  SECTION("incompatible shapes raise") {
    s.moco.momentum.head.w = Tensor({3, 3}, 0.0);
    CHECK_THROWS_AS(momentum_update(s.params, s.moco), dim_error);
  }
}

TEST_CASE("time_domain_loss with identical views and no negatives is zero") {
  TinySetup s = tiny_setup(223, 0);
  // momentum weights equal online weights by construction at init, and
  // p_apply = 0 makes the two views identical
  AugmentConfig acfg;
  acfg.p_apply = 0.0;
  Rng rng(3);
  Rng data_rng(4);
  Tensor batch = test_util::random_tensor({3, s.cfg.h, s.cfg.m}, data_rng);
  Tensor loss = time_domain_loss(batch, s.cfg, s.params, s.moco, acfg, rng);
  CHECK(loss.item() == 0.0);
}

TEST_CASE("time_domain_loss is finite and positive with a populated queue") {
  TinySetup s = tiny_setup(227, 16);
  AugmentConfig acfg;
  Rng rng(5);
  Rng data_rng(6);
  Tensor batch = test_util::random_tensor({4, s.cfg.h, s.cfg.m}, data_rng);
  Tensor loss = time_domain_loss(batch, s.cfg, s.params, s.moco, acfg, rng);
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() > 0.0);
}

TEST_CASE("queue ring buffer: newest keys in, oldest out, size fixed") {
  TinySetup s = tiny_setup(229, 8);
  const std::size_t n = 3;
  std::vector<double> before = s.moco.queue;
  AugmentConfig acfg;
  Rng rng(7);
  Rng data_rng(8);
  Tensor batch = test_util::random_tensor({n, s.cfg.h, s.cfg.m}, data_rng);
  (void)time_domain_loss(batch, s.cfg, s.params, s.moco, acfg, rng);
  REQUIRE(s.moco.queue.size() == 8 * s.moco.key_dim);  // exactly K rows always
  // slots 0..n-1 overwritten, the rest untouched
  std::size_t changed = 0;
  for (std::size_t row = 0; row < 8; ++row) {
    bool same = true;
    for (std::size_t t = 0; t < s.moco.key_dim; ++t) {
      if (s.moco.queue[row * s.moco.key_dim + t] != before[row * s.moco.key_dim + t]) {
        same = false;
      }
    }
    if (!same) ++changed;
    if (row >= n) CHECK(same);
  }
  CHECK(changed == n);
  CHECK(s.moco.next == n);

  // each new key has unit norm
  for (std::size_t row = 0; row < n; ++row) {
    double n2 = 0.0;
    for (std::size_t t = 0; t < s.moco.key_dim; ++t) {
      n2 += s.moco.queue[row * s.moco.key_dim + t] * s.moco.queue[row * s.moco.key_dim + t];
    }
    CHECK(std::fabs(std::sqrt(n2) - 1.0) < 1e-6);
  }
}

TEST_CASE("combined loss gradients reach every online parameter group") {
  TinySetup s = tiny_setup(233, 6);
  const std::size_t n = 2;
  Rng data_rng(9);
  // frozen views and timestamps: the loss is a pure function of parameters
  Tensor views_q = test_util::random_tensor({n, s.cfg.h, s.cfg.m}, data_rng);
  Tensor views_k = test_util::random_tensor({n, s.cfg.h, s.cfg.m}, data_rng);
  std::vector<std::size_t> t_idx = {2, 7};
  const double alpha = 0.5;

  std::vector<Tensor> inputs;
  for (Tensor* t : s.params.all()) inputs.push_back(*t);
  auto f = [&](const std::vector<Tensor>&) {
    Tensor vq_tilde = backbone_forward(views_q, s.cfg, s.params.backbone);
    Tensor vk_tilde = backbone_forward(views_k, s.cfg, s.params.backbone);
    ComplexTensor fq = fourier_layer(rdft_time(vq_tilde), s.params.sfd);
    ComplexTensor fk = fourier_layer(rdft_time(vk_tilde), s.params.sfd);
    Tensor q = project(select_time(tfd_forward(vq_tilde, s.cfg, s.params.tfd), t_idx),
                       s.params.head);
    Tensor k = project(select_time(trend_features(views_k, s.cfg, s.moco.momentum.backbone,
                                                   s.moco.momentum.tfd),
                                   t_idx),
                       s.moco.momentum.head)
                   .detach();
    Tensor l_time = infonce(q, k, queue_snapshot(s.moco), s.moco.tau);
    auto [l_amp, l_phase] = frequency_loss(fq, fk);
    return add(l_time, mul_scalar(add(l_amp, l_phase), alpha / 2.0));
  };
  CHECK(grad_check(f, inputs) < 1e-4);

  // and the momentum branch stays gradient-free
  for (Tensor* t : s.params.all()) t->zero_grad();
  Tensor loss = f(inputs);
  loss.backward();
  CHECK_FALSE(s.moco.momentum.backbone.in_w.has_grad());
  CHECK_FALSE(s.moco.momentum.head.w.has_grad());
  bool any = false;
  for (Tensor* t : s.params.all()) any |= t->has_grad();
  CHECK(any);
}
