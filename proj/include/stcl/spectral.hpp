#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "stcl/tensor.hpp"

namespace stcl {

inline constexpr double kPi = 3.14159265358979323846;

// Complex values ride as real/imaginary tensor pairs; gradients are always
// gradients of a real loss with respect to the two real components.
struct ComplexTensor {
  Tensor re, im;

  ComplexTensor() = default;
  ComplexTensor(Tensor re_, Tensor im_) : re(std::move(re_)), im(std::move(im_)) {
    require_same_shape(re.shape(), im.shape(), "ComplexTensor");
  }

  const Shape& shape() const { return re.shape(); }
  std::size_t numel() const { return re.numel(); }
  bool defined() const { return re.defined(); }
};

namespace detail {

// In-place radix-2 FFT, n a power of two. sign = -1 gives the forward kernel
// exp(-i 2 pi k n / N); sign = +1 the unnormalized inverse kernel.
inline void fft_radix2(double* re, double* im, std::size_t n, int sign) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::size_t a = i + j, b = i + j + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

inline void dft_naive(const double* re_in, const double* im_in, double* re_out,
                      double* im_out, std::size_t n, int sign) {
  std::vector<double> cost(n), sint(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double ang = sign * 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n);
    cost[j] = std::cos(ang);
    sint[j] = std::sin(ang);
  }
  for (std::size_t k = 0; k < n; ++k) {
    double ar = 0.0, ai = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t idx = (k * t) % n;
      const double c = cost[idx], s = sint[idx];
      ar += re_in[t] * c - im_in[t] * s;
      ai += re_in[t] * s + im_in[t] * c;
    }
    re_out[k] = ar;
    im_out[k] = ai;
  }
}

// Unnormalized length-n transform; radix-2 when possible, naive otherwise.
inline void transform(const double* re_in, const double* im_in, double* re_out,
                      double* im_out, std::size_t n, int sign) {
  if ((n & (n - 1)) == 0) {
    std::copy(re_in, re_in + n, re_out);
    std::copy(im_in, im_in + n, im_out);
    fft_radix2(re_out, im_out, n, sign);
  } else {
    dft_naive(re_in, im_in, re_out, im_out, n, sign);
  }
}

}  // namespace detail

// Forward half-spectrum DFT of a real sequence, no autodiff: the independent
// reference for the fast path and a building block for test oracles.
inline std::pair<std::vector<double>, std::vector<double>> rdft_naive(
    const std::vector<double>& x) {
  const std::size_t n = x.size();
  const std::size_t nf = n / 2 + 1;
  std::vector<double> re(nf, 0.0), im(nf, 0.0);
  for (std::size_t k = 0; k < nf; ++k) {
    double ar = 0.0, ai = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
      ar += x[t] * std::cos(ang);
      ai += x[t] * std::sin(ang);
    }
    re[k] = ar;
    im[k] = ai;
  }
  return {std::move(re), std::move(im)};
}

// Real-input DFT along the time axis: [..., N, c] -> complex [..., F, c] with
// F = floor(N/2)+1 retained coefficients (conjugate-symmetric remainder
// implied). Differentiable with respect to x.
inline ComplexTensor rdft_time(const Tensor& x) {
  if (x.rank() < 2) {
    throw dim_error("rdft_time: expected [..., time, ch], got " + shape_str(x.shape()));
  }
  const std::size_t c = x.shape().back();
  const std::size_t n = x.dim(x.rank() - 2);
  if (n < 1 || c < 1) throw dim_error("rdft_time: empty input " + shape_str(x.shape()));
  const std::size_t nf = n / 2 + 1;
  const std::size_t batch = x.numel() / (n * c);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = nf;

  Tensor out_re = detail::op_output(out_shape, {x});
  Tensor out_im = detail::op_output(std::move(out_shape), {x});
  const double* px = x.data().data();
  double* pre = out_re.mutable_data().data();
  double* pim = out_im.mutable_data().data();
  std::vector<double> br(n), bi(n), cr(n), ci(n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t t = 0; t < n; ++t) {
        br[t] = px[(b * n + t) * c + j];
        bi[t] = 0.0;
      }
      detail::transform(br.data(), bi.data(), cr.data(), ci.data(), n, -1);
      for (std::size_t k = 0; k < nf; ++k) {
        pre[(b * nf + k) * c + j] = cr[k];
        pim[(b * nf + k) * c + j] = ci[k];
      }
    }
  }

  // Adjoint of the half-spectrum map: grad_x[t] = Re(sum_k g_k e^{+i2pi kt/N})
  // with g zero-padded to length N (re and im handled as independent reals).
  auto make_backward = [batch, c, n, nf](Node* o, Node* xn, bool imag_part) {
    return [o, xn, batch, c, n, nf, imag_part] {
      double* gx = xn->grad_buf();
      std::vector<double> br(n), bi(n), cr(n), ci(n);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < c; ++j) {
          std::fill(br.begin(), br.end(), 0.0);
          std::fill(bi.begin(), bi.end(), 0.0);
          for (std::size_t k = 0; k < nf; ++k) {
            const double g = o->grad[(b * nf + k) * c + j];
            (imag_part ? bi[k] : br[k]) = g;
          }
          detail::transform(br.data(), bi.data(), cr.data(), ci.data(), n, +1);
          for (std::size_t t = 0; t < n; ++t) gx[(b * n + t) * c + j] += cr[t];
        }
      }
    };
  };
  if (out_re.requires_grad()) {
    Node* xn = x.node().get();
    out_re.node()->backward = make_backward(out_re.node().get(), xn, false);
    out_im.node()->backward = make_backward(out_im.node().get(), xn, true);
  }
  return ComplexTensor(out_re, out_im);
}

// Inverse of rdft_time for a real signal of length n: [..., F, c] -> [..., n, c].
// The imaginary parts of the DC bin (and the Nyquist bin for even n) do not
// describe a real signal; they contribute nothing and receive zero gradient.
inline Tensor irdft_time(const ComplexTensor& cin, std::size_t n) {
  const Tensor& re = cin.re;
  const Tensor& im = cin.im;
  if (re.rank() < 2) {
    throw dim_error("irdft_time: expected [..., freq, ch], got " + shape_str(re.shape()));
  }
  const std::size_t c = re.shape().back();
  const std::size_t nf = re.dim(re.rank() - 2);
  if (n < 1 || nf != n / 2 + 1) {
    throw dim_error("irdft_time: " + std::to_string(nf) +
                    " coefficients inconsistent with signal length " + std::to_string(n));
  }
  const std::size_t batch = re.numel() / (nf * c);
  Shape out_shape = re.shape();
  out_shape[out_shape.size() - 2] = n;
  Tensor out = detail::op_output(std::move(out_shape), {re, im});
  const double* pre = re.data().data();
  const double* pim = im.data().data();
  double* po = out.mutable_data().data();
  const bool even = (n % 2 == 0);
  std::vector<double> br(n), bi(n), cr(n), ci(n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < c; ++j) {
      br[0] = pre[(b * nf + 0) * c + j];
      bi[0] = 0.0;
      for (std::size_t k = 1; k < nf; ++k) {
        const double vr = pre[(b * nf + k) * c + j];
        const double vi = pim[(b * nf + k) * c + j];
        if (even && k == n / 2) {
          br[k] = vr;
          bi[k] = 0.0;
        } else {
          br[k] = vr;
          bi[k] = vi;
          br[n - k] = vr;
          bi[n - k] = -vi;
        }
      }
      detail::transform(br.data(), bi.data(), cr.data(), ci.data(), n, +1);
      const double scale = 1.0 / static_cast<double>(n);
      for (std::size_t t = 0; t < n; ++t) po[(b * n + t) * c + j] = cr[t] * scale;
    }
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* rn = re.node().get();
    Node* in_ = im.node().get();
    o->backward = [o, rn, in_, batch, c, n, nf, even] {
      std::vector<double> br(n), bi(n), cr(n), ci(n);
      const double scale = 1.0 / static_cast<double>(n);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < c; ++j) {
          for (std::size_t t = 0; t < n; ++t) {
            br[t] = o->grad[(b * n + t) * c + j];
            bi[t] = 0.0;
          }
          detail::transform(br.data(), bi.data(), cr.data(), ci.data(), n, -1);
          for (std::size_t k = 0; k < nf; ++k) {
            const bool edge = (k == 0) || (even && k == n / 2);
            const double w = (edge ? 1.0 : 2.0) * scale;
            if (rn->requires_grad) {
              rn->grad_buf()[(b * nf + k) * c + j] += w * cr[k];
            }
            if (in_->requires_grad && !edge) {
              in_->grad_buf()[(b * nf + k) * c + j] += w * ci[k];
            }
          }
        }
      }
    };
  }
  return out;
}

// 1-d conveniences matching the per-sequence contracts.
inline ComplexTensor rdft(const Tensor& x) {
  if (x.rank() != 1 || x.numel() == 0) {
    throw dim_error("rdft: expected non-empty 1-d input, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  ComplexTensor c = rdft_time(reshape(x, {n, 1}));
  return ComplexTensor(reshape(c.re, {n / 2 + 1}), reshape(c.im, {n / 2 + 1}));
}

inline Tensor irdft(const ComplexTensor& c, std::size_t n) {
  if (c.re.rank() != 1) {
    throw dim_error("irdft: expected 1-d coefficients, got " + shape_str(c.re.shape()));
  }
  const std::size_t nf = c.re.dim(0);
  ComplexTensor c2(reshape(c.re, {nf, 1}), reshape(c.im, {nf, 1}));
  return reshape(irdft_time(c2, n), {n});
}

// |c| elementwise; gradient at the origin is taken as 0
inline Tensor amplitude(const ComplexTensor& c) {
  Tensor out = detail::op_output(c.shape(), {c.re, c.im});
  const double* pr = c.re.data().data();
  const double* pi = c.im.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    po[i] = std::hypot(pr[i], pi[i]);
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* rn = c.re.node().get();
    Node* in_ = c.im.node().get();
    o->backward = [o, rn, in_] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        const double a = o->value[i];
        if (a <= 0.0) continue;
        const double g = o->grad[i] / a;
        if (rn->requires_grad) rn->grad_buf()[i] += g * rn->value[i];
        if (in_->requires_grad) in_->grad_buf()[i] += g * in_->value[i];
      }
    };
  }
  return out;
}

// Quadrant-aware phase in (-pi, pi]; the origin maps to 0 with zero gradient
inline Tensor phase(const ComplexTensor& c) {
  Tensor out = detail::op_output(c.shape(), {c.re, c.im});
  const double* pr = c.re.data().data();
  const double* pi = c.im.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (pr[i] == 0.0 && pi[i] == 0.0) {
      po[i] = 0.0;
    } else {
      double p = std::atan2(pi[i], pr[i]);
      if (p == -kPi) p = kPi;
      po[i] = p;
    }
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* rn = c.re.node().get();
    Node* in_ = c.im.node().get();
    o->backward = [o, rn, in_] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        const double r2 = rn->value[i] * rn->value[i] + in_->value[i] * in_->value[i];
        if (r2 == 0.0) continue;
        const double g = o->grad[i] / r2;
        if (rn->requires_grad) rn->grad_buf()[i] -= g * in_->value[i];
        if (in_->requires_grad) in_->grad_buf()[i] += g * rn->value[i];
      }
    };
  }
  return out;
}

// Per-frequency complex affine map. A unique complex weight matrix and bias
// per frequency; no interaction across frequencies.
struct FourierLayerParams {
  ComplexTensor A;  // [F, d, d_S]
  ComplexTensor B;  // [F, d_S]
};

inline FourierLayerParams make_fourier_params(std::size_t freqs, std::size_t d,
                                              std::size_t d_s, Rng& rng) {
  FourierLayerParams p;
  p.A = ComplexTensor(kaiming_uniform({freqs, d, d_s}, d, rng),
                      kaiming_uniform({freqs, d, d_s}, d, rng));
  p.B = ComplexTensor(zeros_param({freqs, d_s}), zeros_param({freqs, d_s}));
  return p;
}

// v: [..., F, d] complex -> [..., F, d_S] complex,
// out[i, k] = sum_j A[i, j, k] * v[i, j] + B[i, k]
inline ComplexTensor fourier_layer(const ComplexTensor& v, const FourierLayerParams& p) {
  if (v.re.rank() < 2) {
    throw dim_error("fourier_layer: expected [..., F, d], got " + shape_str(v.shape()));
  }
  if (p.A.re.rank() != 3 || p.B.re.rank() != 2) {
    throw dim_error("fourier_layer: bad parameter shapes A=" + shape_str(p.A.shape()) +
                    " B=" + shape_str(p.B.shape()));
  }
  const std::size_t nf = p.A.re.dim(0), d = p.A.re.dim(1), ds = p.A.re.dim(2);
  if (v.re.dim(v.re.rank() - 2) != nf || v.shape().back() != d) {
    throw dim_error("fourier_layer: input " + shape_str(v.shape()) +
                    " incompatible with A " + shape_str(p.A.shape()));
  }
  if (p.B.re.dim(0) != nf || p.B.re.dim(1) != ds) {
    throw dim_error("fourier_layer: bias " + shape_str(p.B.shape()) +
                    " incompatible with A " + shape_str(p.A.shape()));
  }
  const std::size_t batch = v.numel() / (nf * d);
  Shape out_shape = v.shape();
  out_shape.back() = ds;

  Tensor out_re = detail::op_output(out_shape, {v.re, v.im, p.A.re, p.A.im, p.B.re});
  Tensor out_im = detail::op_output(std::move(out_shape), {v.re, v.im, p.A.re, p.A.im, p.B.im});
  const double* vr = v.re.data().data();
  const double* vi = v.im.data().data();
  const double* ar = p.A.re.data().data();
  const double* ai = p.A.im.data().data();
  const double* br = p.B.re.data().data();
  const double* bi = p.B.im.data().data();
  double* por = out_re.mutable_data().data();
  double* poi = out_im.mutable_data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < nf; ++i) {
      double* orow = por + (b * nf + i) * ds;
      double* irow = poi + (b * nf + i) * ds;
      for (std::size_t k = 0; k < ds; ++k) {
        orow[k] = br[i * ds + k];
        irow[k] = bi[i * ds + k];
      }
      for (std::size_t j = 0; j < d; ++j) {
        const double xr = vr[(b * nf + i) * d + j];
        const double xi = vi[(b * nf + i) * d + j];
        const double* arow = ar + (i * d + j) * ds;
        const double* aim = ai + (i * d + j) * ds;
        for (std::size_t k = 0; k < ds; ++k) {
          orow[k] += arow[k] * xr - aim[k] * xi;
          irow[k] += arow[k] * xi + aim[k] * xr;
        }
      }
    }
  }
  if (out_re.requires_grad() || out_im.requires_grad()) {
    Node* vrn = v.re.node().get();
    Node* vin = v.im.node().get();
    Node* arn = p.A.re.node().get();
    Node* ain = p.A.im.node().get();
    Node* brn = p.B.re.node().get();
    Node* bin_ = p.B.im.node().get();
    // g_re path: d(out_re)/d(vr)=Ar, /d(vi)=-Ai, /d(Ar)=vr, /d(Ai)=-vi, /d(Br)=1
    Node* ore = out_re.node().get();
    ore->backward = [ore, vrn, vin, arn, ain, brn, batch, nf, d, ds] {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < nf; ++i) {
          const double* g = ore->grad.data() + (b * nf + i) * ds;
          if (brn->requires_grad) {
            double* gb = brn->grad_buf() + i * ds;
            for (std::size_t k = 0; k < ds; ++k) gb[k] += g[k];
          }
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t vidx = (b * nf + i) * d + j;
            const double* arow = arn->value.data() + (i * d + j) * ds;
            const double* aim = ain->value.data() + (i * d + j) * ds;
            if (vrn->requires_grad || vin->requires_grad) {
              double accr = 0.0, acci = 0.0;
              for (std::size_t k = 0; k < ds; ++k) {
                accr += g[k] * arow[k];
                acci -= g[k] * aim[k];
              }
              if (vrn->requires_grad) vrn->grad_buf()[vidx] += accr;
              if (vin->requires_grad) vin->grad_buf()[vidx] += acci;
            }
            if (arn->requires_grad) {
              double* ga = arn->grad_buf() + (i * d + j) * ds;
              const double xr = vrn->value[vidx];
              for (std::size_t k = 0; k < ds; ++k) ga[k] += g[k] * xr;
            }
            if (ain->requires_grad) {
              double* ga = ain->grad_buf() + (i * d + j) * ds;
              const double xi = vin->value[vidx];
              for (std::size_t k = 0; k < ds; ++k) ga[k] -= g[k] * xi;
            }
          }
        }
      }
    };
    // g_im path: d(out_im)/d(vr)=Ai, /d(vi)=Ar, /d(Ar)=vi, /d(Ai)=vr, /d(Bi)=1
    Node* oim = out_im.node().get();
    oim->backward = [oim, vrn, vin, arn, ain, bin_, batch, nf, d, ds] {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < nf; ++i) {
          const double* g = oim->grad.data() + (b * nf + i) * ds;
          if (bin_->requires_grad) {
            double* gb = bin_->grad_buf() + i * ds;
            for (std::size_t k = 0; k < ds; ++k) gb[k] += g[k];
          }
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t vidx = (b * nf + i) * d + j;
            const double* arow = arn->value.data() + (i * d + j) * ds;
            const double* aim = ain->value.data() + (i * d + j) * ds;
            if (vrn->requires_grad || vin->requires_grad) {
              double accr = 0.0, acci = 0.0;
              for (std::size_t k = 0; k < ds; ++k) {
                accr += g[k] * aim[k];
                acci += g[k] * arow[k];
              }
              if (vrn->requires_grad) vrn->grad_buf()[vidx] += accr;
              if (vin->requires_grad) vin->grad_buf()[vidx] += acci;
            }
            if (arn->requires_grad) {
              double* ga = arn->grad_buf() + (i * d + j) * ds;
              const double xi = vin->value[vidx];
              for (std::size_t k = 0; k < ds; ++k) ga[k] += g[k] * xi;
            }
            if (ain->requires_grad) {
              double* ga = ain->grad_buf() + (i * d + j) * ds;
              const double xr = vrn->value[vidx];
              for (std::size_t k = 0; k < ds; ++k) ga[k] += g[k] * xr;
            }
          }
        }
      }
    };
  }
  return ComplexTensor(out_re, out_im);
}

}  // namespace stcl
