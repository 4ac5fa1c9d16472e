#include "fnf/loss.h"

#include <cmath>
#include <stdexcept>

namespace fnf {

namespace {

template <typename T>
T sign_of(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

// Shared forward/backward. When d_pred is null only the loss is computed.
template <typename T>
T loss_impl(const Tensor<T>& pred, const Tensor<T>& target, const RenderParams& rp, T eta,
            Tensor<T>* d_pred) {
  if (!pred.same_shape(target)) throw std::invalid_argument("loss: shape mismatch");
  require_hw3(pred, "loss");
  const int h = pred.dim(0), w = pred.dim(1);

  Tensor<T> sp({h, w, 3}), st({h, w, 3});
  Tensor<T> jac;
  if (d_pred) jac = Tensor<T>({h, w, 3});
  detail::render_pixels(pred, rp, sp, d_pred ? &jac : static_cast<Tensor<T>*>(nullptr));
  detail::render_pixels(target, rp, st, static_cast<Tensor<T>*>(nullptr));

  // e = rendered difference
  Tensor<T> e({h, w, 3});
  for (int64_t i = 0; i < e.size(); ++i) e.data()[i] = sp.data()[i] - st.data()[i];

  const T n_pix = static_cast<T>(e.size());
  const T n_dx = static_cast<T>(static_cast<int64_t>(h) * (w - 1) * 3);
  const T n_dy = static_cast<T>(static_cast<int64_t>(h - 1) * w * 3);

  // sums in double regardless of T
  double sq = 0, l1x = 0, l1y = 0;
  for (int64_t i = 0; i < e.size(); ++i)
    sq += static_cast<double>(e.data()[i]) * e.data()[i];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x)
      for (int c = 0; c < 3; ++c) l1x += std::abs(static_cast<double>(e.at(y, x + 1, c)) - e.at(y, x, c));
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) l1y += std::abs(static_cast<double>(e.at(y + 1, x, c)) - e.at(y, x, c));

  T loss = static_cast<T>(sq / n_pix);
  if (w > 1) loss += eta * static_cast<T>(l1x / n_dx);
  if (h > 1) loss += eta * static_cast<T>(l1y / n_dy);

  if (d_pred) {
    // d(loss)/d(rendered prediction)
    Tensor<T> ds({h, w, 3});
    for (int64_t i = 0; i < e.size(); ++i) ds.data()[i] = T(2) * e.data()[i] / n_pix;
    if (w > 1) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x)
          for (int c = 0; c < 3; ++c) {
            T s = eta * sign_of(e.at(y, x + 1, c) - e.at(y, x, c)) / n_dx;
            ds.at(y, x + 1, c) += s;
            ds.at(y, x, c) -= s;
          }
    }
    if (h > 1) {
      for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) {
            T s = eta * sign_of(e.at(y + 1, x, c) - e.at(y, x, c)) / n_dy;
            ds.at(y + 1, x, c) += s;
            ds.at(y, x, c) -= s;
          }
    }
    // chain through gamma'/clip and the color transform
    *d_pred = Tensor<T>({h, w, 3});
    const T gain = static_cast<T>(rp.gain);
    T cm[9];
    for (int i = 0; i < 9; ++i) cm[i] = static_cast<T>(rp.color_matrix[i]);
    const int64_t npix = static_cast<int64_t>(h) * w;
    for (int64_t i = 0; i < npix; ++i) {
      const T* dsi = ds.data() + i * 3;
      const T* ji = jac.data() + i * 3;
      T* dp = d_pred->data() + i * 3;
      for (int k = 0; k < 3; ++k) {
        T acc = 0;
        for (int c = 0; c < 3; ++c) acc += dsi[c] * ji[c] * gain * cm[c * 3 + k];
        dp[k] = acc;
      }
    }
  }
  return loss;
}

}  // namespace

template <typename T>
T pair_loss(const Tensor<T>& pred, const Tensor<T>& target, const RenderParams& rp, T eta) {
  return loss_impl<T>(pred, target, rp, eta, nullptr);
}

template <typename T>
T pair_loss_grad(const Tensor<T>& pred, const Tensor<T>& target, const RenderParams& rp,
                 T eta, Tensor<T>& d_pred) {
  return loss_impl<T>(pred, target, rp, eta, &d_pred);
}

template float pair_loss(const Tensor<float>&, const Tensor<float>&, const RenderParams&, float);
template double pair_loss(const Tensor<double>&, const Tensor<double>&, const RenderParams&, double);
template float pair_loss_grad(const Tensor<float>&, const Tensor<float>&, const RenderParams&,
                              float, Tensor<float>&);
template double pair_loss_grad(const Tensor<double>&, const Tensor<double>&, const RenderParams&,
                               double, Tensor<double>&);

}  // namespace fnf
