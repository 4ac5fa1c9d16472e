#pragma once

#include "fnf/image.h"
#include "fnf/tensor.h"

namespace fnf {

// Training objective, computed in rendered display space: mean squared pixel
// difference plus eta times the mean absolute forward-difference gradients
// (horizontal and vertical), all between the rendered prediction and target.
//
// pair_loss_grad also returns d(loss)/d(pred) through the rendering chain
// (gain, color matrix, clip, gamma). The clip zeroes the gradient outside
// [0, 1]; the absolute values use sign() with sign(0) = 0.
template <typename T>
T pair_loss(const Tensor<T>& pred, const Tensor<T>& target, const RenderParams& rp, T eta);

template <typename T>
T pair_loss_grad(const Tensor<T>& pred, const Tensor<T>& target, const RenderParams& rp,
                 T eta, Tensor<T>& d_pred);

namespace detail {

// gamma(clip01(gain * C * p)) per pixel; optionally emits the diagonal factor
// gamma'(u) * [0 <= v <= 1] needed by the backward pass.
template <typename T>
void render_pixels(const Tensor<T>& img, const RenderParams& rp, Tensor<T>& out,
                   Tensor<T>* jac_diag) {
  const int64_t npix = img.size() / 3;
  const T gain = static_cast<T>(rp.gain);
  T cm[9];
  for (int i = 0; i < 9; ++i) cm[i] = static_cast<T>(rp.color_matrix[i]);
  const bool srgb = rp.gamma == Gamma::srgb;

  const T* p = img.data();
  T* o = out.data();
  T* jd = jac_diag ? jac_diag->data() : nullptr;
  for (int64_t i = 0; i < npix; ++i) {
    const T* px = p + i * 3;
    for (int c = 0; c < 3; ++c) {
      T v = gain * (cm[c * 3] * px[0] + cm[c * 3 + 1] * px[1] + cm[c * 3 + 2] * px[2]);
      T u = clip01(v);
      o[i * 3 + c] = srgb ? srgb_encode(u) : u;
      if (jd) {
        T inside = (v >= T(0) && v <= T(1)) ? T(1) : T(0);
        jd[i * 3 + c] = inside * (srgb ? srgb_encode_deriv(u) : T(1));
      }
    }
  }
}

}  // namespace detail

}  // namespace fnf
