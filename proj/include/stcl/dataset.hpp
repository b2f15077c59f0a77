#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stcl/rng.hpp"
#include "stcl/tensor.hpp"

namespace stcl {

// A multivariate series plus split bookkeeping. Normalization statistics are
// always computed from the train fraction only.
struct Series {
  Tensor values;  // [T, m]
  std::vector<std::string> channel_names;
  std::size_t target_channel = 0;
  double train_frac = 0.6, val_frac = 0.2, test_frac = 0.2;
  std::vector<double> norm_means;  // per channel; empty until normalize()

  std::size_t length() const { return values.defined() ? values.dim(0) : 0; }
  std::size_t channels() const { return values.defined() ? values.dim(1) : 0; }
  std::size_t train_len() const {
    return static_cast<std::size_t>(train_frac * static_cast<double>(length()));
  }
  std::size_t val_len() const {
    return static_cast<std::size_t>((train_frac + val_frac) * static_cast<double>(length())) -
           train_len();
  }
};

// ---------------------------------------------------------------------------
// CSV ingestion: header row required, optional leading timestamp column
// detected by its non-numeric first value, '.' decimal, comma separated.

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline Series load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("load_csv: " + path + " is empty");
  std::vector<std::string> header = detail::split_csv_line(line);

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  bool skip_first_col = false;
  bool first_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw data_error("load_csv: " + path + " line " + std::to_string(line_no) +
                       ": expected " + std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    if (first_row) {
      double tmp;
      skip_first_col = header.size() > 1 && !detail::parse_double(cells[0], tmp);
      first_row = false;
    }
    std::vector<double> row;
    for (std::size_t c = skip_first_col ? 1 : 0; c < cells.size(); ++c) {
      double v;
      if (!detail::parse_double(cells[c], v)) {
        throw data_error("load_csv: " + path + " line " + std::to_string(line_no) +
                         ": non-numeric cell '" + cells[c] + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw data_error("load_csv: " + path + " has no data rows");

  Series s;
  const std::size_t m = rows[0].size();
  std::vector<double> flat;
  flat.reserve(rows.size() * m);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  s.values = Tensor({rows.size(), m}, std::move(flat));
  for (std::size_t c = skip_first_col ? 1 : 0; c < header.size(); ++c) {
    s.channel_names.push_back(header[c]);
  }
  s.target_channel = m - 1;  // ETT convention: target is the last column
  return s;
}

// Subtract per-channel means of the train fraction from every row (zero-mean
// only, no variance scaling). The means are stored for exact inversion.
inline Series normalize(const Series& in) {
  Series s = in;
  const std::size_t t_len = s.train_len();
  const std::size_t m = s.channels();
  if (t_len == 0) throw data_error("normalize: empty train split");
  std::vector<double> means(m, 0.0);
  const double* pv = s.values.data().data();
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t c = 0; c < m; ++c) means[c] += pv[t * m + c];
  }
  for (double& v : means) v /= static_cast<double>(t_len);
  Tensor out = s.values.detach();
  auto vals = out.mutable_data();
  for (std::size_t t = 0; t < s.length(); ++t) {
    for (std::size_t c = 0; c < m; ++c) vals[t * m + c] -= means[c];
  }
  s.values = out;
  s.norm_means = std::move(means);
  return s;
}

inline Series denormalize(const Series& in) {
  if (in.norm_means.empty()) throw data_error("denormalize: series has no stored means");
  Series s = in;
  Tensor out = s.values.detach();
  auto vals = out.mutable_data();
  const std::size_t m = s.channels();
  for (std::size_t t = 0; t < s.length(); ++t) {
    for (std::size_t c = 0; c < m; ++c) vals[t * m + c] += s.norm_means[c];
  }
  s.values = out;
  s.norm_means.clear();
  return s;
}

struct SplitSeries {
  Series train, val, test;
};

namespace detail {

inline Series take_rows(const Series& src, std::size_t begin, std::size_t end) {
  Series s = src;
  const std::size_t m = src.channels();
  const double* pv = src.values.data().data();
  s.values = Tensor({end - begin, m},
                    std::vector<double>(pv + begin * m, pv + end * m));
  return s;
}

}  // namespace detail

// 60/20/20 contiguous split; windows never straddle the boundaries because
// each split is materialized as its own series.
inline SplitSeries split(const Series& s) {
  const std::size_t n = s.length();
  const std::size_t t_end = s.train_len();
  const std::size_t v_end = t_end + s.val_len();
  if (t_end == 0 || v_end <= t_end || n <= v_end) {
    throw data_error("split: series of length " + std::to_string(n) +
                     " too short for a " + std::to_string(s.train_frac) + "/" +
                     std::to_string(s.val_frac) + "/" + std::to_string(s.test_frac) +
                     " split");
  }
  return {detail::take_rows(s, 0, t_end), detail::take_rows(s, t_end, v_end),
          detail::take_rows(s, v_end, n)};
}

// Contiguous (input, target) pairs: target starts right after the input
// window. Stride applies to the window start offset.
struct WindowPair {
  Tensor input;   // [h, m]
  Tensor target;  // [k, m]
};

inline std::vector<WindowPair> windows(const Series& s, std::size_t h, std::size_t k,
                                       std::size_t stride = 1) {
  if (h < 1 || stride < 1) throw config_error("windows: h and stride must be >= 1");
  const std::size_t n = s.length(), m = s.channels();
  if (n < h + k) {
    throw data_error("windows: split of length " + std::to_string(n) +
                     " too short for window " + std::to_string(h) + " + horizon " +
                     std::to_string(k));
  }
  std::vector<WindowPair> out;
  const double* pv = s.values.data().data();
  for (std::size_t start = 0; start + h + k <= n; start += stride) {
    WindowPair wp;
    wp.input = Tensor({h, m}, std::vector<double>(pv + start * m, pv + (start + h) * m));
    wp.target = k ? Tensor({k, m}, std::vector<double>(pv + (start + h) * m,
                                                       pv + (start + h + k) * m))
                  : Tensor({0, m});
    out.push_back(std::move(wp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: two trend patterns x three seasonal patterns, length
// 1000 each, plus the complex-seasonality variants.

enum class TrendId { logistic, arma_mix };
enum class SeasonId { s20, s50, s100, none, masked3of10, masked2of10 };

inline const char* to_string(TrendId t) {
  return t == TrendId::logistic ? "logistic" : "arma_mix";
}

inline const char* to_string(SeasonId s) {
  switch (s) {
    case SeasonId::s20: return "s20";
    case SeasonId::s50: return "s50";
    case SeasonId::s100: return "s100";
    case SeasonId::none: return "none";
    case SeasonId::masked3of10: return "masked3of10";
    default: return "masked2of10";
  }
}

struct SynthSpec {
  TrendId trend_id = TrendId::logistic;
  SeasonId season_id = SeasonId::s20;
  std::size_t length = 1000;
  std::uint64_t seed = 0;
};

// Saturating trend 1/(1 + exp(b0 (t - b1))) + N(0, 0.3) noise; decreasing in
// t with midpoint 0.5 at t = b1.
inline std::vector<double> gen_trend_logistic(std::size_t n, Rng& rng,
                                              double noise_std = 0.3) {
  const double b0 = 0.2, b1 = 60.0;
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double clean = 1.0 / (1.0 + std::exp(b0 * (static_cast<double>(t) - b1)));
    out[t] = clean + (noise_std > 0.0 ? rng.normal(0.0, noise_std) : 0.0);
  }
  return out;
}

namespace detail {

// ARMA(p, q) with unit-variance Gaussian innovations and a fixed burn-in.
inline std::vector<double> simulate_arma(const std::vector<double>& ar,
                                         const std::vector<double>& ma,
                                         std::size_t n, Rng& rng,
                                         std::size_t burn_in = 200) {
  const std::size_t p = ar.size(), q = ma.size();
  std::vector<double> y(burn_in + n, 0.0), e(burn_in + n, 0.0);
  for (std::size_t t = 0; t < burn_in + n; ++t) {
    e[t] = rng.normal();
    double v = e[t];
    for (std::size_t i = 0; i < p && i < t; ++i) v += ar[i] * y[t - 1 - i];
    for (std::size_t j = 0; j < q && j < t; ++j) v += ma[j] * e[t - 1 - j];
    y[t] = v;
    if (std::fabs(v) > 1e6) {
      throw numeric_error("simulate_arma: trajectory diverged at step " + std::to_string(t));
    }
  }
  return {y.begin() + static_cast<std::ptrdiff_t>(burn_in), y.end()};
}

}  // namespace detail

// ARMA(2,2) + ARMA(3,3) + ARMA(4,4), three independent simulations summed
inline std::vector<double> gen_trend_arma(std::size_t n, Rng& rng) {
  const std::vector<std::pair<std::vector<double>, std::vector<double>>> specs = {
      {{0.9, -0.1}, {0.2, -0.5}},
      {{0.1, 0.2, 0.3}, {0.1, 0.65, -0.45}},
      {{0.3, 0.5, -0.5, -0.3}, {0.1, 0.1, -0.2, -0.3}},
  };
  std::vector<double> out(n, 0.0);
  for (const auto& [ar, ma] : specs) {
    std::vector<double> y = detail::simulate_arma(ar, ma, n, rng);
    for (std::size_t t = 0; t < n; ++t) out[t] += y[t];
  }
  return out;
}

struct SineSpec {
  double period;
  double phase;  // radians
  double amplitude;
};

inline std::vector<double> gen_seasonal(const SineSpec& spec, std::size_t n) {
  if (spec.period <= 0.0) throw config_error("gen_seasonal: period must be positive");
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = spec.amplitude *
             std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(t) / spec.period +
                      spec.phase);
  }
  return out;
}

// Masked sine variants: a base sine multiplied by a repeating binary mask
// starting at t = 0 (ones first).
inline std::vector<double> gen_masked_seasonal(SeasonId variant, std::size_t n) {
  SineSpec spec;
  std::size_t ones, period;
  if (variant == SeasonId::masked3of10) {
    spec = {3.0, 0.0, 10.0};  // three 1s, seven 0s
    ones = 3;
    period = 10;
  } else if (variant == SeasonId::masked2of10) {
    spec = {10.0, 0.5, 15.0};  // two 1s, eight 0s
    ones = 2;
    period = 10;
  } else {
    throw config_error("gen_masked_seasonal: not a masked variant");
  }
  std::vector<double> out = gen_seasonal(spec, n);
  for (std::size_t t = 0; t < n; ++t) {
    if (t % period >= ones) out[t] = 0.0;
  }
  return out;
}

// Noise-free seasonal component for a given id (zeros for SeasonId::none)
inline std::vector<double> seasonal_component(SeasonId id, std::size_t n) {
  switch (id) {
    case SeasonId::s20: return gen_seasonal({20.0, 0.0, 3.0}, n);
    case SeasonId::s50: return gen_seasonal({50.0, 0.2, 3.0}, n);
    case SeasonId::s100: return gen_seasonal({100.0, 0.5, 3.0}, n);
    case SeasonId::none: return std::vector<double>(n, 0.0);
    default: return gen_masked_seasonal(id, n);
  }
}

struct SynthSeries {
  Series series;  // univariate, labeled
  TrendId trend_id;
  SeasonId season_id;
};

inline SynthSeries gen_synthetic(const SynthSpec& spec) {
  // one stream per (seed, trend, season) cell so every series draws
  // independent noise while staying reproducible
  Rng rng(spec.seed * 1000003ULL + static_cast<std::uint64_t>(spec.trend_id) * 631ULL +
          static_cast<std::uint64_t>(spec.season_id) * 29ULL + 17ULL);
  std::vector<double> trend = spec.trend_id == TrendId::logistic
                                  ? gen_trend_logistic(spec.length, rng)
                                  : gen_trend_arma(spec.length, rng);
  std::vector<double> season = seasonal_component(spec.season_id, spec.length);
  std::vector<double> y(spec.length);
  for (std::size_t t = 0; t < spec.length; ++t) y[t] = trend[t] + season[t];
  SynthSeries out;
  out.series.values = Tensor({spec.length, 1}, std::move(y));
  out.series.channel_names = {"value"};
  out.trend_id = spec.trend_id;
  out.season_id = spec.season_id;
  return out;
}

// The 2 x 3 cross product of trends and seasonal patterns; complex = true
// swaps in the complex-seasonality set {none, masked3of10, masked2of10}.
inline std::vector<SynthSeries> gen_synthetic_corpus(std::uint64_t seed,
                                                     bool complex_seasonality = false,
                                                     std::size_t length = 1000) {
  const std::vector<SeasonId> seasons =
      complex_seasonality
          ? std::vector<SeasonId>{SeasonId::none, SeasonId::masked3of10, SeasonId::masked2of10}
          : std::vector<SeasonId>{SeasonId::s20, SeasonId::s50, SeasonId::s100};
  std::vector<SynthSeries> out;
  for (TrendId trend : {TrendId::logistic, TrendId::arma_mix}) {
    for (SeasonId season : seasons) {
      out.push_back(gen_synthetic({trend, season, length, seed}));
    }
  }
  return out;
}

}  // namespace stcl
