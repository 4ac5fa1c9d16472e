#include "fnf/image.h"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace fnf {

Homography Homography::from_matrix(const std::array<double, 9>& m) {
  if (m[8] == 0.0) throw std::invalid_argument("degenerate homography");
  Homography h;
  for (int i = 0; i < 9; ++i) h.m[i] = m[i] / m[8];
  return h;
}

Homography Homography::inverse() const {
  const auto& a = m;
  std::array<double, 9> c;  // adjugate
  c[0] = a[4] * a[8] - a[5] * a[7];
  c[1] = a[2] * a[7] - a[1] * a[8];
  c[2] = a[1] * a[5] - a[2] * a[4];
  c[3] = a[5] * a[6] - a[3] * a[8];
  c[4] = a[0] * a[8] - a[2] * a[6];
  c[5] = a[2] * a[3] - a[0] * a[5];
  c[6] = a[3] * a[7] - a[4] * a[6];
  c[7] = a[1] * a[6] - a[0] * a[7];
  c[8] = a[0] * a[4] - a[1] * a[3];
  double det = a[0] * c[0] + a[1] * c[3] + a[2] * c[6];
  if (std::abs(det) < 1e-12) throw std::invalid_argument("degenerate homography");
  for (auto& v : c) v /= det;
  Homography inv = from_matrix(c);
  inv.rotation_deg = {-rotation_deg[0], -rotation_deg[1], -rotation_deg[2]};
  inv.scale = scale != 0.0 ? 1.0 / scale : 0.0;
  inv.translation_px = {-translation_px[0], -translation_px[1]};
  return inv;
}

Homography compose(const Homography& h_after, const Homography& h_first) {
  const auto& a = h_after.m;
  const auto& b = h_first.m;
  std::array<double, 9> p{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      p[r * 3 + c] = a[r * 3] * b[c] + a[r * 3 + 1] * b[3 + c] + a[r * 3 + 2] * b[6 + c];
  return Homography::from_matrix(p);
}

Image warp_image(const Image& img, const Homography& h) {
  require_hw3(img, "warp_image");
  const Homography inv = h.inverse();
  const int height = img.dim(0), width = img.dim(1);
  Image out({height, width, 3});
  const float* src = img.data();
  float* dst = out.data();

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto [sx, sy] = inv.apply(static_cast<double>(x), static_cast<double>(y));
      // edge replication
      sx = std::clamp(sx, 0.0, static_cast<double>(width - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(height - 1));
      int x0 = static_cast<int>(std::floor(sx));
      int y0 = static_cast<int>(std::floor(sy));
      int x1 = std::min(x0 + 1, width - 1);
      int y1 = std::min(y0 + 1, height - 1);
      float fx = static_cast<float>(sx - x0);
      float fy = static_cast<float>(sy - y0);
      const float* p00 = src + (static_cast<size_t>(y0) * width + x0) * 3;
      const float* p01 = src + (static_cast<size_t>(y0) * width + x1) * 3;
      const float* p10 = src + (static_cast<size_t>(y1) * width + x0) * 3;
      const float* p11 = src + (static_cast<size_t>(y1) * width + x1) * 3;
      float* o = dst + (static_cast<size_t>(y) * width + x) * 3;
      for (int c = 0; c < 3; ++c) {
        float top = (1.0f - fx) * p00[c] + fx * p01[c];
        float bot = (1.0f - fx) * p10[c] + fx * p11[c];
        o[c] = (1.0f - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

double mean_displacement(const Homography& h, int height, int width) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("mean_displacement: dimensions must be positive");
  double total = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto [tx, ty] = h.apply(static_cast<double>(x), static_cast<double>(y));
      total += std::abs(tx - x) + std::abs(ty - y);
    }
  }
  return total / (static_cast<double>(height) * width);
}

Image render_srgb(const Image& img, const RenderParams& rp) {
  require_hw3(img, "render_srgb");
  if (!(rp.gain > 0.0f)) throw std::invalid_argument("render gain must be positive");
  const int64_t npix = img.size() / 3;
  Image out({img.dim(0), img.dim(1), 3});
  const float* in = img.data();
  float* o = out.data();
  const auto& cm = rp.color_matrix;
  for (int64_t i = 0; i < npix; ++i) {
    const float* p = in + i * 3;
    for (int c = 0; c < 3; ++c) {
      float v = rp.gain * (cm[c * 3] * p[0] + cm[c * 3 + 1] * p[1] + cm[c * 3 + 2] * p[2]);
      v = detail::clip01(v);
      o[i * 3 + c] = rp.gamma == Gamma::srgb ? detail::srgb_encode(v) : v;
    }
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double se = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(pa[i]) - pb[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::array<double, kSsimWindow> ssim_window() {
  std::array<double, kSsimWindow> w;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    double d = i - (kSsimWindow - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  const int height = a.dim(0), width = a.dim(1);
  if (height < kSsimWindow || width < kSsimWindow)
    throw std::invalid_argument("ssim: image smaller than 11x11 window");

  static const auto w = ssim_window();
  constexpr double c1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
  constexpr double c2 = 0.03 * 0.03;

  const int oh = height - kSsimWindow + 1;
  const int ow = width - kSsimWindow + 1;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    // horizontal then vertical pass of the separable Gaussian, per moment
    std::vector<double> mx(static_cast<size_t>(height) * ow), my(mx.size()),
        mxx(mx.size()), myy(mx.size()), mxy(mx.size());
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < ow; ++x) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int k = 0; k < kSsimWindow; ++k) {
          double va = a.at(y, x + k, c), vb = b.at(y, x + k, c);
          sx += w[k] * va;
          sy += w[k] * vb;
          sxx += w[k] * va * va;
          syy += w[k] * vb * vb;
          sxy += w[k] * va * vb;
        }
        size_t i = static_cast<size_t>(y) * ow + x;
        mx[i] = sx; my[i] = sy; mxx[i] = sxx; myy[i] = syy; mxy[i] = sxy;
      }
    }
    double channel = 0.0;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int k = 0; k < kSsimWindow; ++k) {
          size_t i = static_cast<size_t>(y + k) * ow + x;
          sx += w[k] * mx[i];
          sy += w[k] * my[i];
          sxx += w[k] * mxx[i];
          syy += w[k] * myy[i];
          sxy += w[k] * mxy[i];
        }
        double va = sxx - sx * sx;
        double vb = syy - sy * sy;
        double cov = sxy - sx * sy;
        double num = (2.0 * sx * sy + c1) * (2.0 * cov + c2);
        double den = (sx * sx + sy * sy + c1) * (va + vb + c2);
        channel += num / den;
      }
    }
    total += channel / (static_cast<double>(oh) * ow);
  }
  return total / 3.0;
}

}  // namespace fnf
