#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "stcl/ridge.hpp"
#include "stcl/rng.hpp"

namespace stcl {

// Held-out accuracy of a one-vs-rest least-squares linear classifier on a
// 50/50 stratified split of the representation vectors. A quantitative
// clusterability measure: separable representations probe near 1.0, random
// ones near 1/num_classes.
inline double linear_probe(const std::vector<double>& x, std::size_t n, std::size_t d,
                           const std::vector<int>& labels, std::uint64_t seed = 0) {
  if (labels.size() != n || x.size() != n * d) {
    throw dim_error("linear_probe: representation/label sizes disagree");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) {
    throw data_error("linear_probe: need at least 2 classes, got " +
                     std::to_string(by_class.size()));
  }
  for (const auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      throw data_error("linear_probe: class " + std::to_string(cls) +
                       " has fewer than 2 samples");
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> train_idx, eval_idx;
  std::map<int, std::size_t> class_slot;
  for (auto& [cls, idx] : by_class) {
    class_slot.emplace(cls, class_slot.size());
    // seeded Fisher-Yates, then first half to train
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[rng.index(i)]);
    }
    const std::size_t half = idx.size() / 2;
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
    eval_idx.insert(eval_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(half), idx.end());
  }

  const std::size_t classes = by_class.size();
  std::vector<double> xt(train_idx.size() * d), yt(train_idx.size() * classes, 0.0);
  for (std::size_t r = 0; r < train_idx.size(); ++r) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(train_idx[r] * d),
              x.begin() + static_cast<std::ptrdiff_t>((train_idx[r] + 1) * d),
              xt.begin() + static_cast<std::ptrdiff_t>(r * d));
    yt[r * classes + class_slot[labels[train_idx[r]]]] = 1.0;
  }
  // tiny fixed stabilizer keeps the normal equations solvable when the
  // representations are rank-deficient
  std::vector<double> w = ridge_fit(xt, train_idx.size(), d, yt, classes, 1e-8);

  std::size_t correct = 0;
  std::vector<double> xe(eval_idx.size() * d);
  for (std::size_t r = 0; r < eval_idx.size(); ++r) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(eval_idx[r] * d),
              x.begin() + static_cast<std::ptrdiff_t>((eval_idx[r] + 1) * d),
              xe.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<double> scores = predict(w, d, classes, xe, eval_idx.size());
  for (std::size_t r = 0; r < eval_idx.size(); ++r) {
    const double* row = scores.data() + r * classes;
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    if (best == class_slot[labels[eval_idx[r]]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_idx.size());
}

}  // namespace stcl
