#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stcl/common.hpp"
#include "stcl/rng.hpp"

namespace stcl {

// Reverse-mode autodiff over dense float64 tensors. Ops build an implicit
// tape: every result node keeps shared ownership of its parents plus a
// closure that scatters the node's upstream gradient into theirs. backward()
// walks the tape once, in reverse topological order. Nodes whose parents all
// have requires_grad == false carry no closure and no parent links, so
// gradient-free branches (momentum encoder, data plumbing) stay cheap.

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  std::size_t numel() const { return value.size(); }

  double* grad_buf() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (data.size() != shape_numel(shape)) {
      throw dim_error("tensor: data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  std::span<const double> data() const { return node_->value; }
  // Mutable access is for leaves (parameter updates, in-place fills);
  // mutating an interior node of a live tape invalidates its gradients.
  std::span<double> mutable_data() { return node_->value; }

  double item() const {
    if (numel() != 1) {
      throw dim_error("item: tensor has " + std::to_string(numel()) + " elements");
    }
    return node_->value[0];
  }

  double at(std::initializer_list<std::size_t> idx) const {
    std::size_t flat = 0;
    std::size_t i = 0;
    for (std::size_t v : idx) flat = flat * node_->shape[i++] + v;
    return node_->value[flat];
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  // Deep copy of values; keeps requires_grad unless overridden.
  Tensor clone(bool requires_grad) const {
    Tensor t = detach();
    t.node_->requires_grad = requires_grad;
    return t;
  }

  void backward() const;

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor op_output(Shape shape, std::initializer_list<Tensor> parents) {
  Tensor out(std::move(shape));
  bool needs = false;
  for (const Tensor& p : parents) needs |= p.requires_grad();
  if (needs) {
    out.node()->requires_grad = true;
    out.node()->parents.reserve(parents.size());
    for (const Tensor& p : parents) out.node()->parents.push_back(p.node());
  }
  return out;
}

inline void axpy(double a, std::span<const double> x, double* y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace detail

inline void Tensor::backward() const {
  if (numel() != 1) {
    throw dim_error("backward: loss must be scalar, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // iterative post-order DFS over grad-requiring nodes
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buf()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward && !(*it)->grad.empty()) (*it)->backward();
  }
}

// ---------------------------------------------------------------------------
// elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = detail::op_output(a.shape(), {a, b});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    o->backward = [o, an, bn] {
      if (an->requires_grad) detail::axpy(1.0, o->grad, an->grad_buf());
      if (bn->requires_grad) detail::axpy(1.0, o->grad, bn->grad_buf());
    };
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out = detail::op_output(a.shape(), {a, b});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    o->backward = [o, an, bn] {
      if (an->requires_grad) detail::axpy(1.0, o->grad, an->grad_buf());
      if (bn->requires_grad) detail::axpy(-1.0, o->grad, bn->grad_buf());
    };
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out = detail::op_output(a.shape(), {a, b});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    o->backward = [o, an, bn] {
      const std::size_t n = o->grad.size();
      if (an->requires_grad) {
        double* g = an->grad_buf();
        for (std::size_t i = 0; i < n; ++i) g[i] += o->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        double* g = bn->grad_buf();
        for (std::size_t i = 0; i < n; ++i) g[i] += o->grad[i] * an->value[i];
      }
    };
  }
  return out;
}

inline Tensor mul_scalar(const Tensor& a, double s) {
  Tensor out = detail::op_output(a.shape(), {a});
  const double* pa = a.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * s;
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    o->backward = [o, an, s] { detail::axpy(s, o->grad, an->grad_buf()); };
  }
  return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = detail::op_output(a.shape(), {a});
  const double* pa = a.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + s;
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    o->backward = [o, an] { detail::axpy(1.0, o->grad, an->grad_buf()); };
  }
  return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---------------------------------------------------------------------------
// reductions

inline Tensor sum(const Tensor& a) {
  Tensor out = detail::op_output(Shape{}, {a});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out.mutable_data()[0] = acc;
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    o->backward = [o, an] {
      const double g = o->grad[0];
      double* ga = an->grad_buf();
      for (std::size_t i = 0; i < an->value.size(); ++i) ga[i] += g;
    };
  }
  return out;
}

inline Tensor mean(const Tensor& a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// dot product along the last axis: [..., c] x [..., c] -> [...]
inline Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "rowwise_dot");
  if (a.rank() < 1) throw dim_error("rowwise_dot: rank-0 input");
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.numel() / c;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  Tensor out = detail::op_output(std::move(out_shape), {a, b});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += pa[r * c + j] * pb[r * c + j];
    po[r] = acc;
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    o->backward = [o, an, bn, rows, c] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = o->grad[r];
        if (an->requires_grad) {
          double* ga = an->grad_buf();
          for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += g * bn->value[r * c + j];
        }
        if (bn->requires_grad) {
          double* gb = bn->grad_buf();
          for (std::size_t j = 0; j < c; ++j) gb[r * c + j] += g * an->value[r * c + j];
        }
      }
    };
  }
  return out;
}

// log(sum(exp(x))) along the last axis, max-shifted for stability
inline Tensor logsumexp_last(const Tensor& a) {
  if (a.rank() < 1) throw dim_error("logsumexp_last: rank-0 input");
  const std::size_t k = a.shape().back();
  const std::size_t rows = a.numel() / k;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  Tensor out = detail::op_output(std::move(out_shape), {a});
  const double* pa = a.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = pa + r * k;
    double m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
    po[r] = m + std::log(s);
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    o->backward = [o, an, rows, k] {
      double* ga = an->grad_buf();
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = o->grad[r];
        const double lse = o->value[r];
        for (std::size_t j = 0; j < k; ++j) {
          ga[r * k + j] += g * std::exp(an->value[r * k + j] - lse);
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape ops

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw dim_error("reshape: cannot view " + shape_str(a.shape()) + " as " +
                    shape_str(shape));
  }
  Tensor out = detail::op_output(std::move(shape), {a});
  std::copy(a.data().begin(), a.data().end(), out.mutable_data().begin());
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    o->backward = [o, an] { detail::axpy(1.0, o->grad, an->grad_buf()); };
  }
  return out;
}

// concatenate along the last axis: [..., c1] + [..., c2] -> [..., c1+c2]
inline Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1) {
    throw dim_error("concat_last: rank mismatch " + shape_str(a.shape()) +
                    " vs " + shape_str(b.shape()));
  }
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw dim_error("concat_last: leading dims differ " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
    }
  }
  const std::size_t c1 = a.shape().back();
  const std::size_t c2 = b.shape().back();
  const std::size_t rows = a.numel() / c1;
  Shape out_shape = a.shape();
  out_shape.back() = c1 + c2;
  Tensor out = detail::op_output(std::move(out_shape), {a, b});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::memcpy(po + r * (c1 + c2), pa + r * c1, c1 * sizeof(double));
    std::memcpy(po + r * (c1 + c2) + c1, pb + r * c2, c2 * sizeof(double));
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    o->backward = [o, an, bn, rows, c1, c2] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = o->grad.data() + r * (c1 + c2);
        if (an->requires_grad) {
          double* ga = an->grad_buf();
          for (std::size_t j = 0; j < c1; ++j) ga[r * c1 + j] += g[j];
        }
        if (bn->requires_grad) {
          double* gb = bn->grad_buf();
          for (std::size_t j = 0; j < c2; ++j) gb[r * c2 + j] += g[c1 + j];
        }
      }
    };
  }
  return out;
}

// pick one time row per batch element: [B, h, c] + idx[B] -> [B, c]
inline Tensor select_time(const Tensor& x, const std::vector<std::size_t>& idx) {
  if (x.rank() != 3) throw dim_error("select_time: expected [B, h, c], got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), h = x.dim(1), c = x.dim(2);
  if (idx.size() != B) throw dim_error("select_time: index count != batch");
  for (std::size_t t : idx) {
    if (t >= h) throw dim_error("select_time: index out of range");
  }
  Tensor out = detail::op_output(Shape{B, c}, {x});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t b = 0; b < B; ++b) {
    std::memcpy(po + b * c, px + (b * h + idx[b]) * c, c * sizeof(double));
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* xn = x.node().get();
    auto indices = idx;
    o->backward = [o, xn, indices, h, c] {
      double* gx = xn->grad_buf();
      for (std::size_t b = 0; b < indices.size(); ++b) {
        const double* g = o->grad.data() + b * c;
        double* dst = gx + (b * h + indices[b]) * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += g[j];
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// neural ops

// x [.., in] @ w [in, out] + b [out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw dim_error("linear: weight must be 2-d, got " + shape_str(w.shape()));
  const std::size_t in = w.dim(0), out_dim = w.dim(1);
  if (x.rank() < 1 || x.shape().back() != in) {
    throw dim_error("linear: input " + shape_str(x.shape()) +
                    " incompatible with weight " + shape_str(w.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != out_dim) {
    throw dim_error("linear: bias " + shape_str(b.shape()) +
                    " incompatible with weight " + shape_str(w.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor out = detail::op_output(std::move(out_shape), {x, w, b});
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pb = b.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = po + r * out_dim;
    std::memcpy(orow, pb, out_dim * sizeof(double));
    const double* xrow = px + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xrow[i];
      const double* wrow = pw + i * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) orow[j] += xv * wrow[j];
    }
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* xn = x.node().get();
    Node* wn = w.node().get();
    Node* bn = b.node().get();
    o->backward = [o, xn, wn, bn, rows, in, out_dim] {
      const double* g = o->grad.data();
      if (xn->requires_grad) {
        double* gx = xn->grad_buf();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g + r * out_dim;
          double* gxrow = gx + r * in;
          for (std::size_t i = 0; i < in; ++i) {
            const double* wrow = wn->value.data() + i * out_dim;
            double acc = 0.0;
            for (std::size_t j = 0; j < out_dim; ++j) acc += grow[j] * wrow[j];
            gxrow[i] += acc;
          }
        }
      }
      if (wn->requires_grad) {
        double* gw = wn->grad_buf();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g + r * out_dim;
          const double* xrow = xn->value.data() + r * in;
          for (std::size_t i = 0; i < in; ++i) {
            const double xv = xrow[i];
            double* gwrow = gw + i * out_dim;
            for (std::size_t j = 0; j < out_dim; ++j) gwrow[j] += xv * grow[j];
          }
        }
      }
      if (bn->requires_grad) {
        double* gb = bn->grad_buf();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g + r * out_dim;
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += grow[j];
        }
      }
    };
  }
  return out;
}

// exact-erf GELU: x * Phi(x)
inline Tensor gelu(const Tensor& x) {
  Tensor out = detail::op_output(x.shape(), {x});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    po[i] = px[i] * 0.5 * (1.0 + std::erf(px[i] * inv_sqrt2));
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* xn = x.node().get();
    o->backward = [o, xn] {
      constexpr double inv_sqrt2pi = 0.39894228040143267794;
      constexpr double inv_sqrt2c = 0.70710678118654752440;
      double* gx = xn->grad_buf();
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        const double v = xn->value[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2c));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += o->grad[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

// Causal 1-d convolution along the time axis with left zero padding of
// (ksize-1)*dilation, so output length equals input length and out[t]
// depends only on x[t' <= t]. x: [..., time, in_ch], kernel:
// [ksize, in_ch, out_ch] with kernel[ksize-1] applied at the current step.
// No bias term.
inline Tensor causal_dilated_conv1d(const Tensor& x, const Tensor& kernel,
                                    std::size_t dilation) {
  if (kernel.rank() != 3) {
    throw dim_error("causal_dilated_conv1d: kernel must be [ksize, in, out], got " +
                    shape_str(kernel.shape()));
  }
  if (x.rank() < 2) {
    throw dim_error("causal_dilated_conv1d: input must be [..., time, in_ch], got " +
                    shape_str(x.shape()));
  }
  if (dilation < 1) throw dim_error("causal_dilated_conv1d: dilation must be >= 1");
  const std::size_t ks = kernel.dim(0), in_ch = kernel.dim(1), out_ch = kernel.dim(2);
  if (x.shape().back() != in_ch) {
    throw dim_error("causal_dilated_conv1d: channel mismatch, input " +
                    shape_str(x.shape()) + " vs kernel " + shape_str(kernel.shape()));
  }
  const std::size_t time = x.dim(x.rank() - 2);
  const std::size_t batch = x.numel() / (time * in_ch);
  Shape out_shape = x.shape();
  out_shape.back() = out_ch;
  Tensor out = detail::op_output(std::move(out_shape), {x, kernel});
  const double* px = x.data().data();
  const double* pk = kernel.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = px + b * time * in_ch;
    double* ob = po + b * time * out_ch;
    for (std::size_t t = 0; t < time; ++t) {
      double* orow = ob + t * out_ch;
      std::fill(orow, orow + out_ch, 0.0);
      for (std::size_t kk = 0; kk < ks; ++kk) {
        const std::size_t back = (ks - 1 - kk) * dilation;
        if (back > t) continue;
        const double* xrow = xb + (t - back) * in_ch;
        const double* krow = pk + kk * in_ch * out_ch;
        for (std::size_t i = 0; i < in_ch; ++i) {
          const double xv = xrow[i];
          const double* kr = krow + i * out_ch;
          for (std::size_t j = 0; j < out_ch; ++j) orow[j] += xv * kr[j];
        }
      }
    }
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* xn = x.node().get();
    Node* kn = kernel.node().get();
    o->backward = [o, xn, kn, batch, time, in_ch, out_ch, ks, dilation] {
      const double* g = o->grad.data();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* gb = g + b * time * out_ch;
        const double* xb = xn->value.data() + b * time * in_ch;
        for (std::size_t t = 0; t < time; ++t) {
          const double* grow = gb + t * out_ch;
          for (std::size_t kk = 0; kk < ks; ++kk) {
            const std::size_t back = (ks - 1 - kk) * dilation;
            if (back > t) continue;
            const std::size_t ts = t - back;
            if (xn->requires_grad) {
              double* gxrow = xn->grad_buf() + (b * time + ts) * in_ch;
              const double* krow = kn->value.data() + kk * in_ch * out_ch;
              for (std::size_t i = 0; i < in_ch; ++i) {
                const double* kr = krow + i * out_ch;
                double acc = 0.0;
                for (std::size_t j = 0; j < out_ch; ++j) acc += grow[j] * kr[j];
                gxrow[i] += acc;
              }
            }
            if (kn->requires_grad) {
              double* gkrow = kn->grad_buf() + kk * in_ch * out_ch;
              const double* xrow = xb + ts * in_ch;
              for (std::size_t i = 0; i < in_ch; ++i) {
                const double xv = xrow[i];
                double* gkr = gkrow + i * out_ch;
                for (std::size_t j = 0; j < out_ch; ++j) gkr[j] += xv * grow[j];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

// normalize vectors along the last axis to unit Euclidean norm; norms below
// eps are clamped (norm floor, keeps the zero vector finite)
inline Tensor l2_normalize_last(const Tensor& x, double eps = 1e-12) {
  if (x.rank() < 1) throw dim_error("l2_normalize_last: rank-0 input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  Tensor out = detail::op_output(x.shape(), {x});
  const double* px = x.data().data();
  double* po = out.mutable_data().data();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += px[r * c + j] * px[r * c + j];
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < c; ++j) po[r * c + j] = px[r * c + j] / norms[r];
  }
  if (out.requires_grad()) {
    Node* o = out.node().get();
    Node* xn = x.node().get();
    o->backward = [o, xn, norms, rows, c, eps] {
      double* gx = xn->grad_buf();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = o->grad.data() + r * c;
        const double* y = o->value.data() + r * c;
        const double n = norms[r];
        double true_norm = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          true_norm += xn->value[r * c + j] * xn->value[r * c + j];
        }
        if (std::sqrt(true_norm) <= eps) {
          // clamped branch: y = x / eps
          for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[j] / eps;
        } else {
          double gy = 0.0;
          for (std::size_t j = 0; j < c; ++j) gy += g[j] * y[j];
          for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += (g[j] - gy * y[j]) / n;
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// parameter initialization

inline Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(shape, 0.0, true);
  for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  return t;
}

inline Tensor zeros_param(Shape shape) { return Tensor(std::move(shape), 0.0, true); }

}  // namespace stcl
