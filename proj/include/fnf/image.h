#pragma once

#include <array>
#include <cmath>

#include "fnf/tensor.h"

namespace fnf {

// 3x3 projective warp in pixel coordinates, normalized so m[8] == 1.
// Provenance fields record how the matrix was sampled; they are carried
// through file sidecars for reproducibility but do not affect apply().
struct Homography {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> rotation_deg{0, 0, 0};
  double scale = 1.0;
  std::array<double, 2> translation_px{0, 0};

  static Homography identity() { return {}; }
  static Homography from_matrix(const std::array<double, 9>& m);

  // Maps pixel (x, y) to warped coordinates.
  std::array<double, 2> apply(double x, double y) const {
    double w = m[6] * x + m[7] * y + m[8];
    return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
  }

  Homography inverse() const;  // throws on a singular matrix

  bool is_identity() const {
    static constexpr std::array<double, 9> id{1, 0, 0, 0, 1, 0, 0, 0, 1};
    return m == id;
  }
};

// h_after(h_first(n)): matrix product h_after.m * h_first.m, renormalized.
Homography compose(const Homography& h_after, const Homography& h_first);

// Inverse bilinear warp: out[n] = img[h^-1(n)]. Out-of-bounds samples
// replicate the nearest edge pixel.
Image warp_image(const Image& img, const Homography& h);

// Mean over all pixels of the Manhattan length of h(n) - n.
double mean_displacement(const Homography& h, int height, int width);

enum class Gamma { srgb, linear };

// Display rendering f(Y) = gamma(gain * C * Y), clipped to [0,1] before the
// gamma curve.
struct RenderParams {
  float gain = 1.0f;
  std::array<float, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Gamma gamma = Gamma::srgb;

  static RenderParams linear_identity() { return {1.0f, {1, 0, 0, 0, 1, 0, 0, 0, 1}, Gamma::linear}; }
};

namespace detail {

template <typename T>
inline T srgb_encode(T v) {
  return v <= T(0.0031308) ? T(12.92) * v
                           : T(1.055) * std::pow(v, T(1) / T(2.4)) - T(0.055);
}

// d srgb_encode / dv on (0, 1]; the linear segment slope elsewhere.
template <typename T>
inline T srgb_encode_deriv(T v) {
  return v <= T(0.0031308) ? T(12.92)
                           : T(1.055 / 2.4) * std::pow(v, T(1) / T(2.4) - T(1));
}

template <typename T>
inline T clip01(T v) {
  return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

}  // namespace detail

Image render_srgb(const Image& img, const RenderParams& rp);

// 10*log10(1/MSE) with peak 1.0; +inf for identical images.
double psnr(const Image& a, const Image& b);

// Mean structural similarity, 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, computed per channel on the valid interior and averaged.
// Throws if either spatial dimension is smaller than the window.
double ssim(const Image& a, const Image& b);

}  // namespace fnf
