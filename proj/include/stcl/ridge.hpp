#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stcl/dataset.hpp"
#include "stcl/encoder.hpp"

namespace stcl {

namespace linalg {

// Cholesky solve of the SPD system A X = B; A is n x n row-major (consumed),
// B is n x m. Throws on a non-positive pivot.
inline std::vector<double> cholesky_solve(std::vector<double> a, std::size_t n,
                                          std::vector<double> b, std::size_t m) {
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
    if (!(diag > 0.0)) {
      throw numeric_error(
          "cholesky_solve: matrix is not positive definite (rank-deficient system; "
          "use a regularizer alpha > 0)");
    }
    const double ljj = std::sqrt(diag);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = v / ljj;
    }
  }
  // forward substitution L Z = B
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      double v = b[i * m + c];
      for (std::size_t k = 0; k < i; ++k) v -= a[i * n + k] * b[k * m + c];
      b[i * m + c] = v / a[i * n + i];
    }
  }
  // back substitution L^T X = Z
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t c = 0; c < m; ++c) {
      double v = b[ii * m + c];
      for (std::size_t k = ii + 1; k < n; ++k) v -= a[k * n + ii] * b[k * m + c];
      b[ii * m + c] = v / a[ii * n + ii];
    }
  }
  return b;
}

}  // namespace linalg

// Frozen-encoder ridge regressor mapping the final-timestamp representation
// directly to the flattened k-step forecast.
struct ForecastModel {
  std::vector<double> weights;  // [d+1, out] row-major; the last row is the bias
  std::size_t feature_dim = 0;
  std::size_t out_dim = 0;
  std::size_t horizon = 0;
  double chosen_alpha = 0.0;
};

struct FeatureMatrix {
  std::vector<double> X;  // [n, d]
  std::vector<double> Y;  // [n, out] with out = k*m, time-major flattening
  std::size_t n = 0, d = 0, out = 0;
};

// One row per stride-1 window: the representation of the final timestamp of
// the window, paired with the next k steps of all channels.
inline FeatureMatrix extract_features(const Series& split, const EncoderConfig& cfg,
                                      const EncoderParams& params, std::size_t k,
                                      std::size_t batch = 64) {
  const std::size_t h = cfg.h, m = cfg.m;
  if (split.channels() != m) {
    throw dim_error("extract_features: series has " + std::to_string(split.channels()) +
                    " channels, encoder expects " + std::to_string(m));
  }
  if (split.length() < h + k) {
    throw data_error("extract_features: split of length " + std::to_string(split.length()) +
                     " too short, need at least " + std::to_string(h + k));
  }
  // frozen copy so feature extraction builds no gradient tape
  EncoderParams frozen = freeze(params);
  const std::size_t n = split.length() - h - k + 1;
  FeatureMatrix fm;
  fm.n = n;
  fm.d = cfg.d;
  fm.out = k * m;
  fm.X.resize(n * fm.d);
  fm.Y.resize(n * fm.out);
  const double* pv = split.values.data().data();
  for (std::size_t base = 0; base < n; base += batch) {
    const std::size_t bn = std::min(batch, n - base);
    Tensor xb({bn, h, m});
    double* px = xb.mutable_data().data();
    for (std::size_t i = 0; i < bn; ++i) {
      std::copy(pv + (base + i) * m, pv + (base + i + h) * m, px + i * h * m);
    }
    EncodeResult enc = encode(xb, cfg, frozen);
    const double* pvv = enc.V.data().data();
    for (std::size_t i = 0; i < bn; ++i) {
      std::copy(pvv + (i * h + h - 1) * cfg.d, pvv + (i * h + h) * cfg.d,
                fm.X.begin() + static_cast<std::ptrdiff_t>((base + i) * fm.d));
      std::copy(pv + (base + i + h) * m, pv + (base + i + h + k) * m,
                fm.Y.begin() + static_cast<std::ptrdiff_t>((base + i) * fm.out));
    }
  }
  return fm;
}

// Closed-form ridge with an appended all-ones bias column; the bias row is
// excluded from the penalty: W = (Xb^T Xb + alpha*I')^-1 Xb^T Y.
inline std::vector<double> ridge_fit(const std::vector<double>& x, std::size_t n,
                                     std::size_t d, const std::vector<double>& y,
                                     std::size_t out, double alpha) {
  if (n < 1) throw data_error("ridge_fit: no rows");
  if (alpha < 0.0) throw config_error("ridge_fit: alpha must be >= 0");
  const std::size_t da = d + 1;
  std::vector<double> gram(da * da, 0.0);
  std::vector<double> rhs(da * out, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = xr[i];
      for (std::size_t j = i; j < d; ++j) gram[i * da + j] += xi * xr[j];
      gram[i * da + d] += xi;
    }
    gram[d * da + d] += 1.0;
    const double* yr = y.data() + r * out;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = xr[i];
      for (std::size_t c = 0; c < out; ++c) rhs[i * out + c] += xi * yr[c];
    }
    for (std::size_t c = 0; c < out; ++c) rhs[d * out + c] += yr[c];
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) gram[i * da + j] = gram[j * da + i];
    gram[i * da + i] += alpha;  // bias row stays unpenalized
  }
  for (std::size_t j = 0; j < d; ++j) gram[d * da + j] = gram[j * da + d];
  return linalg::cholesky_solve(std::move(gram), da, std::move(rhs), out);
}

inline std::vector<double> predict(const std::vector<double>& weights, std::size_t d,
                                   std::size_t out, const std::vector<double>& x,
                                   std::size_t n) {
  if (weights.size() != (d + 1) * out) {
    throw dim_error("predict: weight matrix is not [" + std::to_string(d + 1) + ", " +
                    std::to_string(out) + "]");
  }
  std::vector<double> yhat(n * out);
  for (std::size_t r = 0; r < n; ++r) {
    double* yr = yhat.data() + r * out;
    std::copy(weights.begin() + static_cast<std::ptrdiff_t>(d * out), weights.end(), yr);
    const double* xr = x.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = xr[i];
      const double* wr = weights.data() + i * out;
      for (std::size_t c = 0; c < out; ++c) yr[c] += xi * wr[c];
    }
  }
  return yhat;
}

inline std::pair<double, double> evaluate(const std::vector<double>& yhat,
                                          const std::vector<double>& y) {
  if (yhat.size() != y.size() || y.empty()) {
    throw dim_error("evaluate: prediction and target sizes differ");
  }
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = yhat[i] - y[i];
    se += e * e;
    ae += std::fabs(e);
  }
  const double n = static_cast<double>(y.size());
  return {se / n, ae / n};
}

inline const std::vector<double>& alpha_grid() {
  static const std::vector<double> grid = {0.1, 0.2, 0.5, 1,   2,   5,   10,
                                           20,  50,  100, 200, 500, 1000};
  return grid;
}

struct AlphaSelection {
  double best_alpha = 0.0;
  std::vector<double> weights;  // fit on train at best_alpha
  double val_mse = 0.0;
};

// Fit on train for every grid alpha, pick the one minimizing validation MSE
// (ties break toward the smaller alpha).
inline AlphaSelection select_alpha(const FeatureMatrix& train, const FeatureMatrix& val) {
  if (val.n == 0) throw data_error("select_alpha: empty validation set");
  AlphaSelection best;
  bool first = true;
  for (double alpha : alpha_grid()) {
    std::vector<double> w = ridge_fit(train.X, train.n, train.d, train.Y, train.out, alpha);
    std::vector<double> yhat = predict(w, val.d, val.out, val.X, val.n);
    const double mse = evaluate(yhat, val.Y).first;
    if (first || mse < best.val_mse) {
      best.best_alpha = alpha;
      best.weights = std::move(w);
      best.val_mse = mse;
      first = false;
    }
  }
  return best;
}

inline ForecastModel fit_forecaster(const FeatureMatrix& train, const FeatureMatrix& val,
                                    std::size_t horizon) {
  AlphaSelection sel = select_alpha(train, val);
  ForecastModel m;
  m.weights = std::move(sel.weights);
  m.feature_dim = train.d;
  m.out_dim = train.out;
  m.horizon = horizon;
  m.chosen_alpha = sel.best_alpha;
  return m;
}

}  // namespace stcl
