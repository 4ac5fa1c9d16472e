#pragma once

#include <cmath>
#include <vector>

#include "fnf/rng.h"
#include "fnf/tensor.h"

namespace fnf::test {

template <typename T>
Tensor<T> random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline Image random_image(Rng& rng, int h, int w, float lo = 0.0f, float hi = 1.0f) {
  return random_tensor<float>(rng, {h, w, 3}, lo, hi);
}

template <typename T>
double max_abs(const Tensor<T>& t) {
  double m = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(static_cast<double>(t.data()[i])));
  return m;
}

// max |a-b| normalized by the largest magnitude present
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double scale = std::max({max_abs(a), max_abs(b), 1e-30});
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m / scale;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m;
}

}  // namespace fnf::test
